import os

# in-memory database and no background worker for the whole test session;
# must run before core.db is imported
os.environ["DATABASE_URL"] = "sqlite://"
os.environ["BMG_RUN_WORKER"] = "0"
os.environ.pop("BMG_SEED", None)
os.environ.pop("BMG_KAFKA_BOOTSTRAP", None)
