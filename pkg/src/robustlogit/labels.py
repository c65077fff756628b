"""
Triple-negative (TNBC) response labels from receptor status records, with a discordance audit.

A record is TNBC (label 1) when ER, PR and the effective HER2 status are all negative.
The effective HER2 status is the FISH result when present, the IHC status otherwise.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

import pandas as pd

from robustlogit.errors import DataError, LabelParseError

logger = logging.getLogger(__name__)


class ClinicalStatus(str, Enum):
    Positive = "positive"
    Negative = "negative"
    Indeterminate = "indeterminate"
    Equivocal = "equivocal"
    Missing = "missing"

    @property
    def present(self) -> bool:
        return self is not ClinicalStatus.Missing

    @property
    def definite(self) -> bool:
        return self in (ClinicalStatus.Positive, ClinicalStatus.Negative)


_STATUS_ALIASES: Dict[str, ClinicalStatus] = {
    "positive": ClinicalStatus.Positive,
    "pos": ClinicalStatus.Positive,
    "+": ClinicalStatus.Positive,
    "(+)": ClinicalStatus.Positive,
    "negative": ClinicalStatus.Negative,
    "neg": ClinicalStatus.Negative,
    "-": ClinicalStatus.Negative,
    "(-)": ClinicalStatus.Negative,
    "indeterminate": ClinicalStatus.Indeterminate,
    "equivocal": ClinicalStatus.Equivocal,
    "missing": ClinicalStatus.Missing,
    "": ClinicalStatus.Missing,
    "na": ClinicalStatus.Missing,
    "nan": ClinicalStatus.Missing,
    "[not evaluated]": ClinicalStatus.Missing,
    "[not available]": ClinicalStatus.Missing,
    "[not applicable]": ClinicalStatus.Missing,
    "[unknown]": ClinicalStatus.Missing,
    "[discrepancy]": ClinicalStatus.Missing,
}

# IHC scores: 0 and 1+ read negative, 2+ equivocal, 3+ positive
_IHC_LEVELS: Dict[str, ClinicalStatus] = {
    "0": ClinicalStatus.Negative,
    "1+": ClinicalStatus.Negative,
    "2+": ClinicalStatus.Equivocal,
    "3+": ClinicalStatus.Positive,
}


def parse_status(value: Optional[str], ihc_level: bool = False) -> ClinicalStatus:
    """
    Parse one clinical field; raises `ValueError` on anything outside the known vocabulary.
    """
    if value is None:
        return ClinicalStatus.Missing
    key = str(value).strip().lower()
    if ihc_level and key in _IHC_LEVELS:
        return _IHC_LEVELS[key]
    try:
        return _STATUS_ALIASES[key]
    except KeyError:
        raise ValueError(value) from None


class Her2Source(str, Enum):
    Fish = "FISH"
    IhcStatus = "IHC-status"


@dataclass(frozen=True)
class ClinicalRecord:
    individual_id: str
    er_status: ClinicalStatus = ClinicalStatus.Missing
    pr_status: ClinicalStatus = ClinicalStatus.Missing
    her2_ihc_level: ClinicalStatus = ClinicalStatus.Missing
    her2_ihc_status: ClinicalStatus = ClinicalStatus.Missing
    her2_fish_status: ClinicalStatus = ClinicalStatus.Missing

    def effective_her2(self) -> Tuple[ClinicalStatus, Optional[Her2Source]]:
        if self.her2_fish_status.present:
            return self.her2_fish_status, Her2Source.Fish
        if self.her2_ihc_status.present:
            return self.her2_ihc_status, Her2Source.IhcStatus
        return ClinicalStatus.Missing, None


SUSPECT_IHC_LEVEL_VS_STATUS = "ihc-level-vs-ihc-status"
SUSPECT_IHC_VS_FISH = "ihc-status-vs-fish"


@dataclass(frozen=True)
class LabelResult:
    individual_id: str
    """ 1 = TNBC, 0 = non-TNBC, None = unlabelable """
    label: Optional[int]
    her2_source: Optional[Her2Source]
    suspect: bool = False
    suspect_reason: str = ""

    @property
    def labelable(self) -> bool:
        return self.label is not None


def _discordant(a: ClinicalStatus, b: ClinicalStatus) -> bool:
    return a.definite and b.definite and a is not b


def tnbc_label(
    er: ClinicalStatus, pr: ClinicalStatus, her2: ClinicalStatus
) -> Optional[int]:
    decisive = (er, pr, her2)
    if ClinicalStatus.Positive in decisive:
        return 0
    if all(s is ClinicalStatus.Negative for s in decisive):
        return 1
    # indeterminate, equivocal or missing: blocks TNBC without forcing non-TNBC
    return None


def derive_label(record: ClinicalRecord) -> LabelResult:
    her2, source = record.effective_her2()
    label = tnbc_label(record.er_status, record.pr_status, her2)
    reasons = []
    if _discordant(record.her2_ihc_level, record.her2_ihc_status):
        reasons.append(SUSPECT_IHC_LEVEL_VS_STATUS)
    if _discordant(record.her2_ihc_status, record.her2_fish_status):
        reasons.append(SUSPECT_IHC_VS_FISH)
    return LabelResult(
        individual_id=record.individual_id,
        label=label,
        her2_source=source,
        suspect=bool(reasons),
        suspect_reason=";".join(reasons),
    )


CLINICAL_COLUMNS = {
    "individual_id": "individual_id",
    "er_status": "er_status",
    "pr_status": "pr_status",
    "her2_ihc_level": "her2_ihc_level",
    "her2_ihc_status": "her2_ihc_status",
    "her2_fish_status": "her2_fish_status",
}


def load_clinical(
    source: Union[str, TextIO],
    columns: Optional[Mapping[str, str]] = None,
    sep: Optional[str] = None,
) -> List[ClinicalRecord]:
    """
    Read clinical records from a CSV/TSV table.

    :param columns: maps record fields to header names, for tables with other column names.
    """
    mapping = dict(CLINICAL_COLUMNS)
    mapping.update(columns or {})
    if sep is None:
        name = source if isinstance(source, str) else getattr(source, "name", "")
        sep = "\t" if str(name).lower().endswith((".tsv", ".txt")) else ","
    frame = pd.read_csv(source, sep=sep, dtype=str, keep_default_na=False)
    missing = [header for header in mapping.values() if header not in frame.columns]
    if missing:
        raise DataError("Missing clinical column", column=missing[0])

    records = []
    for position, row in enumerate(frame.itertuples(index=False)):
        values = dict(zip(frame.columns, row))
        individual = str(values[mapping["individual_id"]]).strip()
        if not individual:
            raise DataError("Empty individual id", row=position + 1)
        fields: Dict[str, ClinicalStatus] = {}
        for field_name in CLINICAL_COLUMNS:
            if field_name == "individual_id":
                continue
            header = mapping[field_name]
            try:
                fields[field_name] = parse_status(
                    values[header], ihc_level=field_name == "her2_ihc_level"
                )
            except ValueError:
                raise LabelParseError(str(values[header]), individual, header) from None
        records.append(ClinicalRecord(individual, **fields))
    logger.info("Loaded %d clinical records", len(records))
    return records


def derive_labels(records: Iterable[ClinicalRecord]) -> List[LabelResult]:
    results = [derive_label(r) for r in records]
    logger.info(
        "Labels: %d TNBC, %d non-TNBC, %d unlabelable, %d suspect",
        sum(1 for r in results if r.label == 1),
        sum(1 for r in results if r.label == 0),
        sum(1 for r in results if r.label is None),
        sum(1 for r in results if r.suspect),
    )
    return results


def labels_frame(results: Sequence[LabelResult]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "individual_id": [r.individual_id for r in results],
            "label": pd.array([r.label for r in results], dtype="Int64"),
            "her2_source": [r.her2_source.value if r.her2_source else "" for r in results],
            "suspect": [int(r.suspect) for r in results],
            "suspect_reason": [r.suspect_reason for r in results],
        }
    )


def _alternative_labels(record: ClinicalRecord) -> List[Optional[int]]:
    """ Labels obtained when each other present HER2 field is taken as the effective status """
    _, source = record.effective_her2()
    alternatives = []
    for her2, name in (
        (record.her2_fish_status, Her2Source.Fish),
        (record.her2_ihc_status, Her2Source.IhcStatus),
        (record.her2_ihc_level, None),
    ):
        if name is source or not her2.present:
            continue
        alternatives.append(tnbc_label(record.er_status, record.pr_status, her2))
    return alternatives


def audit_labels(records: Sequence[ClinicalRecord]) -> pd.DataFrame:
    """
    One row per suspect record: the rules that fired, the label, and whether another HER2
    source would change the label.
    """
    rows = []
    for record in records:
        result = derive_label(record)
        if not result.suspect:
            continue
        alternatives = _alternative_labels(record)
        rows.append(
            {
                "individual_id": record.individual_id,
                "label": result.label,
                "her2_source": result.her2_source.value if result.her2_source else "",
                "rules": result.suspect_reason,
                "her2_ihc_level": record.her2_ihc_level.value,
                "her2_ihc_status": record.her2_ihc_status.value,
                "her2_fish_status": record.her2_fish_status.value,
                "alternative_labels": ";".join(
                    "NA" if a is None else str(a) for a in alternatives
                ),
                "label_flips": int(any(a != result.label for a in alternatives)),
            }
        )
    frame = pd.DataFrame(
        rows,
        columns=[
            "individual_id",
            "label",
            "her2_source",
            "rules",
            "her2_ihc_level",
            "her2_ihc_status",
            "her2_fish_status",
            "alternative_labels",
            "label_flips",
        ],
    )
    frame["label"] = frame["label"].astype("Int64")
    return frame


@dataclass(frozen=True)
class SuspectOverlap:
    flagged_and_suspect: Tuple[str, ...]
    flagged_only: Tuple[str, ...]
    suspect_only: Tuple[str, ...]


def outlier_suspect_overlap(
    flagged_ids: Iterable[str], results: Iterable[LabelResult]
) -> SuspectOverlap:
    """
    Cross-reference rows flagged by a fit with records whose labels are suspect.
    """
    flagged = list(dict.fromkeys(str(i) for i in flagged_ids))
    suspects = [r.individual_id for r in results if r.suspect]
    suspect_set = set(suspects)
    flagged_set = set(flagged)
    return SuspectOverlap(
        flagged_and_suspect=tuple(i for i in flagged if i in suspect_set),
        flagged_only=tuple(i for i in flagged if i not in suspect_set),
        suspect_only=tuple(i for i in suspects if i not in flagged_set),
    )


__all__ = [
    "ClinicalStatus",
    "Her2Source",
    "ClinicalRecord",
    "LabelResult",
    "SuspectOverlap",
    "SUSPECT_IHC_LEVEL_VS_STATUS",
    "SUSPECT_IHC_VS_FISH",
    "CLINICAL_COLUMNS",
    "parse_status",
    "tnbc_label",
    "derive_label",
    "derive_labels",
    "load_clinical",
    "labels_frame",
    "audit_labels",
    "outlier_suspect_overlap",
]
