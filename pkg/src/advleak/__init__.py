"""Adversarial removal of protected attributes from text encoders, audited.

Train an LSTM encoder under a gradient-reversal adversarial objective, then
measure how much protected-attribute signal a post-hoc attacker can still
recover from the frozen representations.
"""

__version__ = "0.1.0"
