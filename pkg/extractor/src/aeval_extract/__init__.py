from .extract import ExtractorSpec, extract, load_manifest_items
from .models import available_models, register_model

__all__ = ["ExtractorSpec", "extract", "load_manifest_items",
           "available_models", "register_model"]
