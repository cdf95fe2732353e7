"""Configuration module for the spleen length toolkit.

This module contains the constants and default values used across the package,
including the desk-scale defaults, the paper-faithful preset, the dataset manifest
layout and the published reference figures used for comparison in reports.
"""

# Method tags
METHOD_SB = "SB"
METHOD_DE = "DE"
METHOD_DEW = "DEW"
METHOD_VGG = "VGG"
METHODS = [METHOD_SB, METHOD_DE, METHOD_DEW, METHOD_VGG]
# fully connected batch norm statistics need two samples
MIN_REGRESSOR_TRAINING_CASES = 2

# Architecture tag of each method (DEW shares the DE architecture)
METHOD_ARCHITECTURE = {
    METHOD_SB: "SB",
    METHOD_DE: "DE",
    METHOD_DEW: "DE",
    METHOD_VGG: "VGG",
}

# Desk-scale image size, divisible by 2**5
DEFAULT_IMAGE_SHAPE = (64, 96)

# Real scans are cropped to this size and padded to the next multiple of 2**depth
CLINICAL_IMAGE_SHAPE = (638, 894)

# Network defaults
DEFAULT_DEPTH = 5
DESK_BASE_CHANNELS = 8
PUBLISHED_BASE_CHANNELS = 64
BOTTLENECK_DROPOUT = 0.5
FC_NODES = 256
FC_LAYERS = 2
VGG_STAGE_WIDTHS = (64, 128, 256, 512, 512)
VGG_STAGE_CONVS = (2, 2, 4, 4, 4)
SEGMENTATION_THRESHOLD = 0.5

# Autodiff defaults
BN_MOMENTUM = 0.1
BN_EPS = 1e-5
GRADCHECK_STEP = 1e-5
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_POINTWISE_TOLERANCE = 1e-6
CHECKPOINT_VERSION = 1

# Training defaults
DESK_LEARNING_RATE = 1e-3
PUBLISHED_LEARNING_RATE = 1e-5
DEFAULT_BATCH_SIZE = 4
DEFAULT_EPOCHS = 150
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
DICE_SMOOTH = 1.0

# Hyperparameter grid used for the inner cross-validation
WEIGHT_DECAY_GRID = [1e-6, 1e-7, 1e-8]
K_OUTER = 3
K_INNER = 3
GROUPING_BY_PATIENT = "patient"
GROUPING_BY_CASE = "case"

# Augmentation defaults
ROTATION_RANGE = (-20.0, 20.0)
PUBLISHED_ROTATION_RANGE = (0.0, 20.0)
GAMMA_RANGE = (0.7, 1.5)
EQUALIZATION_PROBABILITY = 0.5
EQUALIZATION_TILES = 8
EQUALIZATION_CLIP = 0.01

# Inpainting
INPAINT_TOLERANCE = 1e-6
INPAINT_MAX_DEFECT_FRACTION = 0.2
INPAINT_JACOBI_DAMPING = 0.5
INPAINT_ITERATIONS_PER_PIXEL = 50

# Phantom defaults
PHANTOM_COUNT = 108
PHANTOM_PATIENTS = 93
PHANTOM_MAX_CASES_PER_PATIENT = 4
PHANTOM_BOUNDARY_SAMPLES = 10_000
PHANTOM_MAX_RETRIES = 100
PHANTOM_SELF_CHECK_PX = 2.0

# Dataset layout
MANIFEST_NAME = "manifest.csv"
IMAGES_DIR = "images"
MASKS_DIR = "masks"
ANNOTATIONS_DIR = "annotations"
MANIFEST_COLUMNS = [
    "case_id",
    "patient_id",
    "image_path",
    "mask_path",
    "sy_mm",
    "sx_mm",
    "length_mm",
    "length_px",
]
OPTIONAL_MANIFEST_COLUMNS = ["annotation_path"]

# Result files
RESULTS_DIR = "results"
TABLE1_NAME = "table1.csv"
PREDICTIONS_NAME = "predictions.csv"
REPORT_NAME = "report.html"

# Published figures, reported next to desk results for context only
PUBLISHED_PARAMETER_COUNTS = {
    "VGG": 178_180_545,
    "DE": 344_512_449,
}
PUBLISHED_TABLE1 = {
    "SB": {"PLE": 7.42, "R": 0.93, "Dice": 0.88, "HD": 13.27},
    "DE": {"PLE": 12.80, "R": 0.86},
    "DEW": {"PLE": 12.88, "R": 0.87},
    "VGG": {"PLE": 12.99, "R": 0.88},
    "E1 vs E2": {"PLE": 5.47, "R": 0.94},
    "E1 vs E3": {"PLE": 5.52, "R": 0.97},
    "E2 vs E3": {"PLE": 6.34, "R": 0.93},
}

# Overrides applied by --paper-faithful
PUBLISHED_PRESET = {
    "learning_rate": PUBLISHED_LEARNING_RATE,
    "batch_size": DEFAULT_BATCH_SIZE,
    "rotation_range": PUBLISHED_ROTATION_RANGE,
    "weight_decay_grid": WEIGHT_DECAY_GRID,
    "base_channels": PUBLISHED_BASE_CHANNELS,
}

# CLI exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3
