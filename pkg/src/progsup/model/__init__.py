"""Vision-language encoder and coarse-to-fine program decoder."""

from .decoder import (DecoderConfig, ProgramBatch, ProgramDecoder, ProgramPrediction, dependency_mask,
                      program_losses)
from .encoder import EncoderOutput, ModelConfig, TokenVocab, VLEncoder
