from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker
from sqlalchemy.pool import StaticPool

from app.core.config import settings

# Base class for the calibration store models
Base = declarative_base()


def make_engine(url: Optional[str] = None) -> Engine:
    """Engine for a calibration store URL; in-memory SQLite shares one connection"""
    url = url or settings.calibration_store_url
    if url in ("sqlite://", "sqlite:///:memory:"):
        return create_engine(
            url, connect_args={"check_same_thread": False}, poolclass=StaticPool, echo=settings.debug
        )
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args, pool_pre_ping=True, echo=settings.debug)


def make_session_factory(url: Optional[str] = None) -> sessionmaker:
    """Session factory bound to a store whose tables exist"""
    engine = make_engine(url)
    init_db(engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def init_db(engine: Engine) -> None:
    from app.models import calibration  # noqa: F401  registers the table

    Base.metadata.create_all(bind=engine)


_session_factory: Optional[sessionmaker] = None


def get_db():
    """
    Database dependency for the HTTP endpoints.
    Opens the store named by settings on first use.
    """
    global _session_factory
    if _session_factory is None:
        _session_factory = make_session_factory()
    db = _session_factory()
    try:
        yield db
    finally:
        db.close()
