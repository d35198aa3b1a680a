"""Program-supervised visual question answering at desk scale."""
