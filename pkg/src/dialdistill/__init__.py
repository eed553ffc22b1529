"""dialdistill: future-aware teacher / history-only student dialogue distillation.

A numpy-only library for training a response generator whose teacher
sees both the conversation so far and the turns that follow, then
distilling that teacher into a student restricted to the history alone.
"""

__version__ = "0.1.0"
