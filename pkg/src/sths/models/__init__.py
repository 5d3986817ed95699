from sths.models.base import PSEUDO, SEEN, BaseModel, ModelError, SingularSystemError, TrainingSet, argmax_labels
from sths.models.embedding import EmbeddingModel, EmbeddingParams, fit_embedding, predict_embedding
from sths.models.generative import GenerativeModel, GenerativeParams, fit_generative, predict_generative

MODELS = {"embedding": (EmbeddingModel, EmbeddingParams), "generative": (GenerativeModel, GenerativeParams)}


def make_model(kind: str = "embedding", **params):
    """Construct a base model by name with keyword hyperparameters."""
    try:
        model_cls, params_cls = MODELS[kind]
    except KeyError:
        raise ValueError(f"unknown base model {kind!r}; choose from {sorted(MODELS)}") from None
    return model_cls(params_cls(**params))


__all__ = [
    "BaseModel",
    "EmbeddingModel",
    "EmbeddingParams",
    "GenerativeModel",
    "GenerativeParams",
    "ModelError",
    "PSEUDO",
    "SEEN",
    "SingularSystemError",
    "TrainingSet",
    "argmax_labels",
    "fit_embedding",
    "fit_generative",
    "make_model",
    "predict_embedding",
    "predict_generative",
]
