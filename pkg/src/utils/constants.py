"""
Shared constants for the LTL policy synthesis toolkit
Only includes constants actually used in the codebase
"""

# Version information
__version__ = "0.3.0"

import os

# Sink marker of the augmented product
PHI = "phi"

# Name of the residual (empty) letter and the prefix of generated letter names
EMPTY_LETTER_NAME = "L_none"
LETTER_PREFIX = "L_"

# Default optimizer settings for the actor-critic learner
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8

# Numerical tolerances
ROW_SUM_TOLERANCE = 1e-12
VALUE_RANGE_TOLERANCE = 1e-9

# Fraction of the horizon that must be free of accepting visits for a
# trajectory to count as "finitely many visits" in the visits-growth diagnostic
VISIT_TAIL_FRACTION = 0.2

# Run directory file names
CONFIG_SNAPSHOT = "config.yaml"
METRICS_CSV = "metrics.csv"
STAGES_CSV = "stages.csv"
TRAJECTORIES_CSV = "trajectories.csv"
SUMMARY_CSV = "summary.csv"
ACTOR_CHECKPOINT = "actor.safetensors"
CRITIC_CHECKPOINT = "critic.safetensors"


def get_builtin_automata_directory() -> str:
    """Directory holding the case-study automata in the text format"""
    return os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "logic", "builtin")
