"""quizforge: RL-driven quiz composition from MCQ pools.

Trains DQN, SARSA, A2C, or A3C agents to walk a precomputed quiz universe
toward teacher-specified topic and difficulty distributions, with an
exhaustive-scan oracle, synthetic data generation, and an experiment harness.
"""

from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
