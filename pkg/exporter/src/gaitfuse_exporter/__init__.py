"""Backbone feature exporter bridging real footage into the fusion engine."""

from .annotations import AnnotationError, convert_annotation, convert_annotations
from .backbones import BackboneError, load_backbone
from .export import ExportError, ExportManifest, export_features, verify_manifest
from .gft import gft_byte_size, read_gft, write_gft

__version__ = "0.1.0"
