"""Few-shot voice adaptation sandbox: tiny autodiff core, FastSpeech-style
backbone with conditional layer norm in the decoder, acoustic condition
encoders, and the full pretrain / finetune / deploy / infer pipeline on a
synthetic multi-speaker corpus."""

from .kernels import BACKEND as kernel_backend  # noqa: F401

__version__ = "0.1.0"
