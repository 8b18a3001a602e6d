"""
Database - SQLAlchemy store for run summaries and Monte Carlo trials.

Each CLI command that produces a result records one row in ``runs``; trial
studies add one row per trial in ``trials``. Any SQLAlchemy URL works; the CLI
passes ``paths.database`` (a file path becomes a SQLite URL).
"""

from datetime import datetime, timezone
import logging
from typing import List, Optional, Sequence

from sqlalchemy import Boolean, DateTime, Float, ForeignKey, Integer, String, create_engine, select
from sqlalchemy.orm import DeclarativeBase, Mapped, Session, mapped_column, relationship

logger = logging.getLogger(__name__)


class Base(DeclarativeBase):
    pass


class Run(Base):
    __tablename__ = "runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    command: Mapped[str] = mapped_column(String(32))
    status: Mapped[str] = mapped_column(String(32))
    integral: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    detail: Mapped[str] = mapped_column(String, default="")
    created: Mapped[datetime] = mapped_column(DateTime(timezone=True),
                                              default=lambda: datetime.now(timezone.utc))
    trials: Mapped[List["Trial"]] = relationship(back_populates="run", cascade="all, delete-orphan",
                                                 order_by="Trial.index")


class Trial(Base):
    __tablename__ = "trials"

    id: Mapped[int] = mapped_column(Integer, primary_key=True)
    run_id: Mapped[int] = mapped_column(ForeignKey("runs.id"))
    index: Mapped[int] = mapped_column(Integer)
    parameter: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    reached_goal: Mapped[bool] = mapped_column(Boolean)
    max_abs_torque: Mapped[Optional[float]] = mapped_column(Float, nullable=True)
    final_state: Mapped[str] = mapped_column(String, default="")
    run: Mapped[Run] = relationship(back_populates="trials")


def database_url(location: str) -> str:
    """SQLAlchemy URL for a configured location; bare paths become SQLite files."""
    return location if "://" in location else f"sqlite:///{location}"


class ResultStore:
    """Repository over the ``runs`` and ``trials`` tables."""

    def __init__(self, url: str = "sqlite://"):
        self.engine = create_engine(database_url(url))
        Base.metadata.create_all(self.engine)

    def record_run(self, command: str, status: str, integral: Optional[float] = None,
                   detail: str = "") -> int:
        with Session(self.engine) as session:
            run = Run(command=command, status=status, integral=integral, detail=detail)
            session.add(run)
            session.commit()
            logger.debug("recorded run %d (%s, %s)", run.id, command, status)
            return run.id

    def record_trials(self, run_id: int, rows: Sequence[dict]) -> None:
        """
        Attach trial rows to a run.

        Each row carries ``index``, ``reached_goal`` and optionally ``parameter``
        (w or stiffness scale), ``max_abs_torque`` and ``final_state`` (a sequence
        of numbers stored space-separated).
        """
        with Session(self.engine) as session:
            for row in rows:
                final = row.get("final_state")
                session.add(Trial(
                    run_id=run_id, index=int(row["index"]), parameter=row.get("parameter"),
                    reached_goal=bool(row["reached_goal"]), max_abs_torque=row.get("max_abs_torque"),
                    final_state="" if final is None else " ".join(repr(float(v)) for v in final)))
            session.commit()

    def runs(self, command: Optional[str] = None) -> List[Run]:
        with Session(self.engine, expire_on_commit=False) as session:
            query = select(Run).order_by(Run.id)
            if command is not None:
                query = query.where(Run.command == command)
            return list(session.scalars(query))

    def trials(self, run_id: int) -> List[Trial]:
        with Session(self.engine, expire_on_commit=False) as session:
            return list(session.scalars(select(Trial).where(Trial.run_id == run_id).order_by(Trial.index)))
