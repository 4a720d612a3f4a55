"""Y-sampling presets, anchor grid angles and file schema versions."""

APOLLOSIM_Y_STEPS: tuple[float, ...] = (5, 10, 15, 20, 30, 40, 50, 65, 80, 100)
OPENLANE_Y_STEPS: tuple[float, ...] = tuple(float(y) for y in range(5, 101, 5))
ONCE_Y_STEPS: tuple[float, ...] = (2, 5, 8, 10, 15, 20, 25, 30, 40, 50)

Y_SAMPLING_PRESETS: dict[str, tuple[float, ...]] = {
    "apollosim": APOLLOSIM_Y_STEPS,
    "openlane": OPENLANE_Y_STEPS,
    "once": ONCE_Y_STEPS,
}

ANCHOR_X_INTERVAL = 1.3
ANCHOR_YAWS_DEG: tuple[float, ...] = (0, 1, -1, 3, -3, 5, -5, 7, -7, 10, -10, 15, -15, 20, -20, 30, -30)
ANCHOR_PITCHES_DEG: tuple[float, ...] = (0, 1, -1, 2, -2, 5, -5)
ONCE_ANCHOR_Z_S = -1.5

BEHIND_CAMERA_DEPTH = 1e-6
FOCAL_PROB_CLAMP = 1e-7

EVAL_SCHEMA_VERSION = "lane3d-eval-v1"
DATASET_SCHEMA_VERSION = "lane3d-synth-v1"
CHECKPOINT_SCHEMA_VERSION = "lane3d-ckpt-v1"
