"""Configuration defaults for the extrinsic calibration toolkit."""
import math
import os
from dotenv import load_dotenv

load_dotenv()


def _env_float(name: str, default: float) -> float:
    return float(os.getenv(name, str(default)))


def _env_int(name: str, default: int) -> int:
    return int(os.getenv(name, str(default)))


def _env_bool(name: str, default: bool) -> bool:
    return os.getenv(name, "true" if default else "false").lower() == "true"


# Feature geometry
MIN_PLANE_POINTS = _env_int("CALIB_MIN_PLANE_POINTS", 20)
PLANARITY_RATIO = _env_float("CALIB_PLANARITY_RATIO", 5.0)  # 2nd-smallest / smallest eigenvalue
TANGENT_STEP = _env_float("CALIB_TANGENT_STEP", 1.0)  # meters along plane tangents

# Data association
MATCH_MAX_DIST = _env_float("CALIB_MATCH_MAX_DIST", 1.0)  # temporal pole matching gate (m)
CANDIDATE_GATE = _env_float("CALIB_CANDIDATE_GATE", 3.0)  # cross-sensor coarse gate (m) under the translation guess
CANDIDATE_CAP = _env_int("CALIB_CANDIDATE_CAP", 400)  # candidates per sensor pair
WEDGE_MARGIN = math.radians(_env_float("CALIB_WEDGE_MARGIN_DEG", 0.0))
CONSENSUS_BIN = _env_float("CALIB_CONSENSUS_BIN", 0.25)  # m, histogram cell of the pair offset vote
CONSENSUS_MIN_SUPPORT = _env_int("CALIB_CONSENSUS_MIN_SUPPORT", 3)

# Stage 1: yaw estimation
YAW_TOL = _env_float("CALIB_YAW_TOL", 1e-4)  # rad
YAW_MAX_ITERS = _env_int("CALIB_YAW_MAX_ITERS", 20)
YAW_GRID_SAMPLES = _env_int("CALIB_YAW_GRID", 721)
YAW_LOCAL_SEARCH = math.radians(_env_float("CALIB_YAW_LOCAL_SEARCH_DEG", 5.0))  # window of the passes after the first
YAW_LOCAL_SAMPLES = _env_int("CALIB_YAW_LOCAL_GRID", 41)
MIN_YAW_EXCITATION = _env_float("CALIB_MIN_YAW_EXCITATION", 0.2)  # total |yaw change| in rad

# Stage 2: overlap MIP
MIP_LAMBDA = _env_float("CALIB_MIP_LAMBDA", 0.5)  # max matching error per pair (m)
MIP_GAMMA = _env_float("CALIB_MIP_GAMMA", math.radians(5.0))  # yaw trust radius (rad)
MIP_RHO = _env_float("CALIB_MIP_RHO", 1.0)  # yaw regularization weight (m/rad)
MIP_GAP_TOL = _env_float("CALIB_MIP_GAP_TOL", 1e-6)
MIP_NODE_LIMIT = _env_int("CALIB_MIP_NODE_LIMIT", 200)
MIP_TIME_LIMIT = _env_float("CALIB_MIP_TIME_LIMIT", 0.0)  # seconds of wall clock, 0 disables
MIP_CONSENSUS_RADIUS = _env_float("CALIB_MIP_CONSENSUS_RADIUS", 1.0)  # m, L1 residual at the seed
MIP_CORE_CAP = _env_int("CALIB_MIP_CORE_CAP", 20)  # core candidates per sensor pair

# Vehicle geometry (bounds on sensor x/y)
VEHICLE_LENGTH = _env_float("CALIB_VEHICLE_LENGTH", 4.8)
VEHICLE_WIDTH = _env_float("CALIB_VEHICLE_WIDTH", 1.9)
VEHICLE_OFFSET_X = _env_float("CALIB_VEHICLE_OFFSET_X", 1.4)
VEHICLE_OFFSET_Y = _env_float("CALIB_VEHICLE_OFFSET_Y", 0.0)
SENSOR_MAX_RANGE = _env_float("CALIB_SENSOR_MAX_RANGE", 30.0)

# Stage 3: joint refinement
REFINE_WEIGHT_REG = _env_float("CALIB_REFINE_W_REG", 1.0)
REFINE_WEIGHT_POLE = _env_float("CALIB_REFINE_W_POLE", 1.0)
REFINE_WEIGHT_PLANE = _env_float("CALIB_REFINE_W_PLANE", 1.0)
REFINE_WEIGHT_ANGLE = _env_float("CALIB_REFINE_W_ANGLE", 1.0)
REFINE_MAX_ITERS = _env_int("CALIB_REFINE_MAX_ITERS", 100)
REFINE_ROBUST_SCALE = _env_float("CALIB_REFINE_ROBUST_SCALE", 0.05)  # m, where the pole/plane loss turns linear
PLANE_PAIR_MAX_ANGLE = math.radians(_env_float("CALIB_PLANE_PAIR_MAX_ANGLE_DEG", 10.0))
ANCHOR_SENSOR = os.getenv("CALIB_ANCHOR_SENSOR", "")  # empty -> first configured sensor

# Online monitoring
ONLINE_WINDOW = _env_int("CALIB_ONLINE_WINDOW", 100)  # frames
ONLINE_ALPHA = _env_float("CALIB_ONLINE_ALPHA", 0.2)
ONLINE_PAIR_GATE = _env_float("CALIB_ONLINE_PAIR_GATE", 0.5)  # m, vehicle-frame base distance
ONLINE_YAW_SEARCH = math.radians(_env_float("CALIB_ONLINE_YAW_SEARCH_DEG", 5.0))
ONLINE_RHO_XY = _env_float("CALIB_ONLINE_RHO_XY", 1.0)
ONLINE_RHO_YAW = _env_float("CALIB_ONLINE_RHO_YAW", 1.0)
ONLINE_MIN_TRAVEL = _env_float("CALIB_ONLINE_MIN_TRAVEL", 1.0)  # m of vehicle travel in the window before yaw updates
ONLINE_YAW_SAMPLES = _env_int("CALIB_ONLINE_YAW_SAMPLES", 41)
ONLINE_REFINE_ITERS = _env_int("CALIB_ONLINE_REFINE_ITERS", 3)  # warm-started every step

# Stream ingestion
SYNC_TOL = _env_float("CALIB_SYNC_TOL", 0.005)  # seconds
STREAM_FORMAT_VERSION = 1

# Simulation
SIM_DROPOUT_ENABLED = _env_bool("CALIB_SIM_DROPOUT", False)
SIM_DROPOUT_PROB = _env_float("CALIB_SIM_DROPOUT_PROB", 0.1)

# Observability
LOG_LEVEL = os.getenv("CALIB_LOG_LEVEL", "info").lower()
RUN_LOG_PATH = os.getenv("CALIB_RUN_LOG_PATH", "")  # empty -> stderr echo only
RUN_LOG_MAX_MB = _env_float("CALIB_RUN_LOG_MAX_MB", 5.0)
