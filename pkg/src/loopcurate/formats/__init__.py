"""Readers and writers for every on-disk artifact.

Writers are deterministic (same value, same bytes) so golden files stay
byte-stable; parsers report a location with every error.
"""

from .canonical import canonical_json, format_decimal
from .class_config import ClassConfig, ClassDef, load_class_config, save_class_config
from .imagescope import import_imagescope_xml, write_imagescope_xml
from .native_xml import parse_native_xml, write_native_xml
from .patch_labels import (
    PatchLabelRecord,
    query_labels,
    read_patch_labels,
    write_patch_labels,
)

__all__ = [
    "canonical_json",
    "format_decimal",
    "ClassConfig",
    "ClassDef",
    "load_class_config",
    "save_class_config",
    "write_native_xml",
    "parse_native_xml",
    "write_imagescope_xml",
    "import_imagescope_xml",
    "PatchLabelRecord",
    "write_patch_labels",
    "read_patch_labels",
    "query_labels",
]
