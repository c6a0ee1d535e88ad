"""Self-updating streaming person verification.

Per-user ensembles of random space trees score each arriving instance;
an uncertainty gate decides when to ask an expert (or oracle) whether the
verdict was right, and a small recurrent Q-network turns each answer into
one structural update per tree.
"""

from .actions import UpdateAction, apply_action, encode_state
from .data import (DatasetInstance, MinMaxNormalizer, SplitPlan,
                   cmu_shaped_synthetic, load_cmu_csv, load_generic_csv,
                   make_split, synthetic_dataset)
from .feedback import (FeedbackEvent, instance_uncertainty, node_uncertainty,
                       record_feedback, should_request_feedback)
from .forest import (Classifier, SpaceTree, TreeNode, Welford, WorkspaceBounds,
                     build_workspace, calibrate_threshold, grow_tree,
                     logistic_cdf, node_density, tree_negative_probability)
from .metrics import ConfusionCounts, confusion, roc_auc
from .pipeline import (EnrolledUser, IdentificationOutcome, OracleFeedbackSource,
                       PipelineConfig, RewardSpec, UserRegistry, compute_reward,
                       enroll_user, identify)
from .qnet import (QNetwork, ReplayMemory, TrainerConfig, Transition,
                   sample_minibatch, select_action)

__version__ = "0.1.0"
