from .config import ServiceConfig, load_config
from .service import create_app
from .store import StudyStore

__all__ = ["ServiceConfig", "load_config", "create_app", "StudyStore"]
