"""sopforge: staged multi-agent toy video generation.

A six-task SOP pipeline of five tiny agents with human-in-the-loop
checkpoints, self-modulated end-to-end fine-tuning, a data-free training
loop with judge-consensus data selection, cosine-similarity video metrics,
bit-exact persistence, and an HTTP control surface.
"""

__version__ = "0.1.0"
