"""
Configuration settings and constants for marginclip
"""

# Configuration file settings
DEFAULT_CONFIG_FILE = "marginclip.toml"
OUTPUT_ROOT_ENV = "MARGINCLIP_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"
DEFAULT_EXPERIMENT_NAME = "experiment"

# Synthetic data: 10 classes of 16x16x3 images, 500 train + 100 test per class
DEFAULT_CLASSES = 10
DEFAULT_HEIGHT = 16
DEFAULT_WIDTH = 16
DEFAULT_CHANNELS = 3
DEFAULT_TRAIN_PER_CLASS = 500
DEFAULT_TEST_PER_CLASS = 100
DEFAULT_NOISE_SIGMA = 0.03
# Share of the training split handed to the defender as its clean set
DEFAULT_CLEAN_FRACTION = 0.02

# Attack
ATTACK_MODES = ("none", "all2one", "one2one", "all2all")
TRIGGER_KINDS = ("patch", "chessboard", "blend")
DEFAULT_ATTACK_MODE = "all2one"
DEFAULT_TRIGGER = "patch"
DEFAULT_TARGET = 0
DEFAULT_SOURCE = 1
# Weaker triggers need a larger poisoned share
DEFAULT_POISON_RATES = {"patch": 0.01, "blend": 0.01, "chessboard": 0.05}

# Detection
DEFAULT_THETA = 0.005
CORRECTION_MODES = ("correct", "reject")
DEFAULT_CORRECTION_MODE = "correct"

# Harness
DEFENSES = ("none", "mmac", "mmdf")
DEFAULT_REPETITIONS = 1

# Artifact file names inside a repetition directory
CLEAN_TRAIN_FILE = "train_clean.mmds"
POISONED_TRAIN_FILE = "train_poisoned.mmds"
CLEAN_SET_FILE = "clean_set.mmds"
TEST_FILE = "test.mmds"
TRIGGERED_TEST_FILE = "test_triggered.mmds"
MODEL_FILE = "model.mmck"
BOUNDS_FILE = "bounds.zbnd"
NULL_FILE = "null.json"
HISTORY_FILE = "history.csv"
TRAJECTORY_FILE = "trajectory.csv"
ADAPTIVE_FILE = "adaptive.csv"
PROFILE_FILE = "profile.csv"
DETECTIONS_FILE = "detections.csv"
ROC_PLOT_FILE = "roc.svg"
ROC_FILE = "roc.csv"
REPORT_FILE = "report.csv"
SUMMARY_FILE = "summary.csv"
MANIFEST_FILE = "manifest.json"
