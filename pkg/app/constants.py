"""Shared constants for the ensemble driving stack."""

# Sensor channels, in learner order
CHANNELS = ("state", "left", "right")

# Vehicle state layout: [p_x, p_y, theta, psi, V_x, V_y, theta_dot]
STATE_FIELDS = ("p_x", "p_y", "theta", "psi", "V_x", "V_y", "theta_dot")
PX, PY, THETA, PSI, VX, VY, THETA_DOT = range(7)
STATE_DIM = 7

# Control layout: [steering, throttle]
CONTROL_FIELDS = ("steering", "throttle")
CONTROL_DIM = 2
CONTROL_LIMIT = 1.0

# Log-variance head clamp, guards exp overflow
LOG_VARIANCE_CLAMP = 20.0

# Large fully connected preset, selected with hidden_preset = "large"
LARGE_HIDDEN_WIDTHS = (1024, 512, 256, 128)

# Checkpoint / config formats
CHECKPOINT_SCHEMA_VERSION = 1
CONFIG_SCHEMA_VERSION = 1

# Trajectory CSV columns
TRAJECTORY_COLUMNS = (
    "step", "t", "p_x", "p_y", "theta", "V_x", "V_y", "theta_dot",
    "steering", "throttle", "lap", "crashed",
)

# Exit codes
EXIT_OK = 0
EXIT_CRASH = 2
EXIT_CONFIG = 3
EXIT_DIVERGED = 4
