"""
Low-switching LSVI-UCB toolkit
Linear-MDP reinforcement learning with logarithmic policy switching, plus
the experiment harness that measures regret and switching cost
"""

__version__ = "1.0.0"
