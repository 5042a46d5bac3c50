from pathlib import Path

import pytest

from adrrefine import events

DATA_DIR = Path(__file__).parent / "data"
WORKED_EXAMPLE = DATA_DIR / "worked_example"


@pytest.fixture(scope="session")
def worked_example_dir() -> Path:
    return WORKED_EXAMPLE


@pytest.fixture()
def worked_store() -> events.EventStore:
    return events.load(
        str(WORKED_EXAMPLE / "patients.csv"), str(WORKED_EXAMPLE / "events.csv")
    )


def write_cohort(tmp_path: Path, patients_rows: list[str], events_rows: list[str]):
    """Write minimal cohort CSVs and return their paths."""
    patients = tmp_path / "patients.csv"
    evs = tmp_path / "events.csv"
    patients.write_text(
        "patient_id,gender,year_of_birth,registration_date\n"
        + "".join(r + "\n" for r in patients_rows)
    )
    evs.write_text(
        "patient_id,date,code_type,code\n" + "".join(r + "\n" for r in events_rows)
    )
    return str(patients), str(evs)
