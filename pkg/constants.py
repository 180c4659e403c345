"""
Shared numerical constants for the weight-normalized GAN library.
"""

# Weight normalization
WN_EPS = 1e-6                  # added to the sum of squared weights before sqrt
FIRST_LAYER_INIT_SCALE = 0.01  # first generator layer: U(-0.01/sqrt(c_i), 0.01/sqrt(c_i))

# Batch normalization
BN_EPS = 1e-5                  # inside sqrt(var + eps)
BN_MOMENTUM = 0.1              # running = (1 - m) * running + m * batch

# Rectifiers
PRELU_SLOPE_INIT = 0.25
TRELU_ALPHA_INIT = 0.0
SLOPE_MIN = 0.0                # slopes are clipped to [SLOPE_MIN, SLOPE_MAX] after every update
SLOPE_MAX = 1.0

# Residual blocks: weighted normalized addition starts as a pure shortcut
WNADD_SHORTCUT_INIT = 1.0
WNADD_RESIDUE_INIT = 0.0

# Optimizer (training and latent inversion share alpha / eps)
LEARNING_RATE = 1e-4
RMSPROP_ALPHA = 0.9
RMSPROP_EPS = 1e-6

# Reconstruction evaluation
EVAL_LR = 0.01
RUNNING_EVAL_STEPS = 50
FINAL_EVAL_STEPS = 2000
RUNNING_EVAL_SAMPLES = 200
EVAL_EVERY = 500

# Gradient checking
FD_STEP = 1e-6
GRAD_RTOL = 1e-4
GRAD_ATOL = 1e-7               # central differences at h=1e-6 carry ~1e-9 roundoff
GRAD_SMALL = 1e-8              # analytic entries below this are compared absolutely
GRAD_SMALL_ATOL = 1e-6

# Lipschitz checks
BOUND_SLACK = 1e-9

VARIANTS = ("vanilla", "bn", "wn", "affine_wn")
ARCHITECTURES = ("dcgan", "mlp", "resnet")

# Validate ranges at import time
if not 0.0 < RMSPROP_ALPHA < 1.0:
    raise ValueError(f"RMSPROP_ALPHA must lie in (0, 1): {RMSPROP_ALPHA}")

if not SLOPE_MIN <= PRELU_SLOPE_INIT <= SLOPE_MAX:
    raise ValueError(f"PRELU_SLOPE_INIT outside clip range: {PRELU_SLOPE_INIT}")

_non_positive = [name for name, value in {
    "WN_EPS": WN_EPS, "BN_EPS": BN_EPS, "BN_MOMENTUM": BN_MOMENTUM,
    "LEARNING_RATE": LEARNING_RATE, "EVAL_LR": EVAL_LR, "FD_STEP": FD_STEP,
}.items() if value <= 0]
if _non_positive:
    raise ValueError(f"Constants must be positive: {_non_positive}")
