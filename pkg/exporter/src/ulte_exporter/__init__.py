"""Token-embedding exchange file exporter."""

from .exporter import (
    DEFAULT_DIM,
    DEFAULT_MAX_LEN,
    DEFAULT_MODEL,
    EmbeddingBackend,
    ExporterError,
    ExportJob,
    InputFormatError,
    ModelLoadError,
    StubBackend,
    TransformersBackend,
    export,
    query_hash_id,
    read_input_lines,
    write_exchange_file,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_DIM",
    "DEFAULT_MAX_LEN",
    "DEFAULT_MODEL",
    "EmbeddingBackend",
    "ExporterError",
    "ExportJob",
    "InputFormatError",
    "ModelLoadError",
    "StubBackend",
    "TransformersBackend",
    "export",
    "query_hash_id",
    "read_input_lines",
    "write_exchange_file",
]
