"""Cross-domain motion transfer at desk scale.

Trains a keypoint-based motion transfer model on source-domain videos and
adapts it to animate still images from a different target domain, combining
cyclic reconstruction, angle-consistency regularization over a discovered
keypoint topology, and a keypoint-anchored patch-adversarial appearance loss.
"""

__version__ = "0.1.0"

from .model import (  # noqa: E402,F401
    DenseMotion,
    ModelConfig,
    MotionRepresentation,
    MotionTransferModel,
    PerceptualLoss,
)
from .topology import (  # noqa: F401
    DiversityMatrix,
    KeypointTrajectory,
    TopologyGraph,
    build_topology,
    discover_topology,
    distance_diversity,
    edge_value,
    enumerate_structured_triplets,
    select_threshold,
)
from .angle_losses import (  # noqa: F401
    AngleTriplet,
    centroid,
    included_angle,
    motion_adaptation_loss,
    structured_angle_loss,
    unstructured_angle_loss,
)
from .patches import (  # noqa: F401
    PatchDiscriminator,
    PatchSet,
    appearance_losses,
    discriminator_score,
    extract_patches,
)
from .training import Trainer, TrainingConfig  # noqa: F401
from .evaluation import (  # noqa: F401
    EvalReport,
    PoseOracle,
    evaluate,
    train_pose_oracle,
    write_report,
)
