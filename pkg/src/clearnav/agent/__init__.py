"""Navigation agent: episodes, attention-LSTM decoder, imitation and actor-critic training."""
from .episode import (
    STOP,
    Candidate,
    DTWTracker,
    Episode,
    discounted_returns,
    orientation,
    shaped_reward,
    teacher_action,
)
from .model import (
    ORIENT_DIM,
    AgentState,
    Decoder,
    StepOutput,
    decoder_step,
    view_features,
    view_orientations,
)
from .rollout import MODES, Navigator, Rollout, a2c_update, greedy_trajectories, il_loss
from .train import (
    NavConfig,
    NavItem,
    TrainingDivergence,
    build_navigator,
    evaluate,
    nav_loss,
    train_nav,
)
