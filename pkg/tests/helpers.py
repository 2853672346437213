"""Shared builders for test fixtures (importable by module name from any
test in this directory; conftest puts this directory on sys.path)."""

from pathlib import Path

from mmehr import ingest
from mmehr.synth import source_schemas
from mmehr.tables import parse_table

SOURCE_TABLES = ("patients", "admissions", "icustays", "vitals", "notes", "images")


def build_master_from_sources(src_dir):
    """Parse the six source tables and assemble a MasterDataset."""
    schemas = source_schemas()
    tables = {
        name: parse_table(Path(src_dir) / f"{name}.csv", schemas[name])
        for name in SOURCE_TABLES
    }
    linked = ingest.link_stays(
        tables["patients"], tables["admissions"], tables["icustays"]
    )
    stays = [k for k, _, _ in linked.stays]
    vit = ingest.attach_events(stays, tables["vitals"], "vital")
    nts = ingest.attach_events(stays, tables["notes"], "note")
    img = ingest.attach_events(stays, tables["images"], "image")
    return ingest.build_master(linked, vitals=vit, notes=nts, images=img)
