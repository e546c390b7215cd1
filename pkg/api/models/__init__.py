from api.models.base import Base, create_all
from api.models.bench import BenchRun, RepTiming, record_result

__all__ = ["Base", "create_all", "BenchRun", "RepTiming", "record_result"]
