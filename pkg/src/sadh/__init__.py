"""Self-supervised asymmetric deep hashing with margin-scalable constraints."""

__version__ = "0.1.0"

from .data import MultiLabelDataset, SplitSpec, generate_synthetic, make_split  # noqa: E402
from .image import ImageNetConfig, j_img_loss, train_image  # noqa: E402
from .nn import MlpNetwork, backward, forward  # noqa: E402
from .retrieval import CodeDatabase, encode, mean_ap, rank, retrieve  # noqa: E402
from .semantic import SemanticDictionary, SemanticNetConfig, build_dictionaries, train_semantic  # noqa: E402

__all__ = [
    "CodeDatabase",
    "ImageNetConfig",
    "MlpNetwork",
    "MultiLabelDataset",
    "SemanticDictionary",
    "SemanticNetConfig",
    "SplitSpec",
    "backward",
    "build_dictionaries",
    "encode",
    "forward",
    "generate_synthetic",
    "j_img_loss",
    "make_split",
    "mean_ap",
    "rank",
    "retrieve",
    "train_image",
    "train_semantic",
]
