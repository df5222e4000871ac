"""
SHADOWLAB Run Ledger
Optional SQLAlchemy persistence of experiment runs. The ledger lives next to
the artifacts and never feeds back into them.
"""

import os
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

from sqlalchemy import JSON, DateTime, Integer, String, Text, create_engine, select
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column, sessionmaker

DEFAULT_DATABASE_URL = "sqlite:///shadowlab_runs.db"


class Base(DeclarativeBase):
    pass


class RunRecordModel(Base):
    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    kind: Mapped[str] = mapped_column(String, index=True)
    config_hash: Mapped[str] = mapped_column(String, index=True)
    seed: Mapped[int] = mapped_column(Integer)
    verdict: Mapped[Optional[str]] = mapped_column(String, nullable=True)
    exit_status: Mapped[int] = mapped_column(Integer, default=0)
    report_path: Mapped[Optional[str]] = mapped_column(Text, nullable=True)
    created_at: Mapped[datetime] = mapped_column(DateTime(timezone=True), default=lambda: datetime.now(timezone.utc))
    summary: Mapped[Dict[str, Any]] = mapped_column(JSON, default=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "verdict": self.verdict,
            "exit_status": self.exit_status,
            "report_path": self.report_path,
            "created_at": self.created_at.isoformat() if self.created_at else None,
            "summary": self.summary,
        }


class DatabaseManager:
    """
    Synchronous ledger manager.
    Set SHADOWLAB_DATABASE_URL to point elsewhere; defaults to a local SQLite file.
    """

    def __init__(self, database_url: Optional[str] = None):
        self.database_url = database_url or os.getenv("SHADOWLAB_DATABASE_URL", DEFAULT_DATABASE_URL)
        self.engine = create_engine(self.database_url, echo=False)
        self.session_factory = sessionmaker(bind=self.engine, expire_on_commit=False)

    def init_db(self) -> None:
        Base.metadata.create_all(self.engine)

    def get_session(self) -> Session:
        return self.session_factory()

    def record_run(
        self,
        kind: str,
        config_hash: str,
        seed: int,
        verdict: Optional[str] = None,
        exit_status: int = 0,
        report_path: Optional[str] = None,
        summary: Optional[Dict[str, Any]] = None,
    ) -> RunRecordModel:
        self.init_db()
        record = RunRecordModel(
            kind=kind,
            config_hash=config_hash,
            seed=seed,
            verdict=verdict,
            exit_status=exit_status,
            report_path=report_path,
            summary=summary or {},
        )
        with self.get_session() as session:
            session.add(record)
            session.commit()
        return record

    def runs(self, kind: Optional[str] = None, config_hash: Optional[str] = None) -> List[RunRecordModel]:
        self.init_db()
        stmt = select(RunRecordModel).order_by(RunRecordModel.id)
        if kind:
            stmt = stmt.where(RunRecordModel.kind == kind)
        if config_hash:
            stmt = stmt.where(RunRecordModel.config_hash == config_hash)
        with self.get_session() as session:
            return list(session.scalars(stmt))

    def close(self) -> None:
        self.engine.dispose()
