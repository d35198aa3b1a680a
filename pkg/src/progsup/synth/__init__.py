"""Synthetic GQA-like world: scenes, questions, programs, noise, datasets."""

from .dataset import (Dataset, DatasetError, Sample, WorldConfig, generate_corpus, make_splits,
                      read_dataset, tail_answers, write_dataset)
from .executor import ExecutionError, Trace, execute_program, execute_trace
from .noise import (Detection, NoiseConfig, appearance_map, apply_presence_shift, embed_objects,
                    ground_truth_detections, one_hot_width)
from .templates import TEMPLATES, Realization, Rejected, Template, answer_vocabulary, realize_question, word_vocabulary
from .world import (CLASSES, COLORS, RELATIONS, SIZES, SceneConfig, SceneGraph, SceneObject,
                    attribute_priors, gen_scene, related)
