"""
文件处理工具函数

File helpers for configs, manifests, sidecars and metric tables.
"""

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ArtifactError, ConfigError


class FileUtils:
    """文件处理工具类"""

    @staticmethod
    def read_text_file(file_path: str, encoding: str = 'utf-8') -> str:
        """读取文本文件"""
        path = Path(file_path)
        if not path.exists():
            raise FileNotFoundError(f"File not found: {file_path}")
        return path.read_text(encoding=encoding)

    @staticmethod
    def write_text_file(file_path: str, content: str, encoding: str = 'utf-8'):
        """写入文本文件 (atomic: temp file + rename)"""
        FileUtils.atomic_write_bytes(file_path, content.encode(encoding))

    @staticmethod
    def atomic_write_bytes(file_path: str, payload: bytes):
        path = Path(file_path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            with os.fdopen(fd, 'wb') as f:
                f.write(payload)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp_name, path)
        except OSError as e:
            raise ArtifactError(f"Cannot write {file_path}: {e}", path=str(file_path)) from e

    @staticmethod
    def read_json_file(file_path: str) -> Dict[str, Any]:
        """读取JSON文件"""
        return json.loads(FileUtils.read_text_file(file_path))

    @staticmethod
    def write_json_file(file_path: str, data: Dict[str, Any], indent: int = 2):
        """写入JSON文件"""
        content = json.dumps(data, indent=indent, ensure_ascii=False, default=str)
        FileUtils.write_text_file(file_path, content + "\n")

    @staticmethod
    def read_yaml_file(file_path: str) -> Dict[str, Any]:
        """读取YAML文件"""
        return yaml.safe_load(FileUtils.read_text_file(file_path)) or {}

    @staticmethod
    def read_toml_file(file_path: str) -> Dict[str, Any]:
        """读取TOML文件"""
        return tomllib.loads(FileUtils.read_text_file(file_path))

    @staticmethod
    def read_config_file(file_path: str) -> Dict[str, Any]:
        """Read a YAML or TOML config, chosen by suffix"""
        suffix = Path(file_path).suffix.lower()
        try:
            if suffix == ".toml":
                return FileUtils.read_toml_file(file_path)
            if suffix in (".yaml", ".yml"):
                return FileUtils.read_yaml_file(file_path)
        except (yaml.YAMLError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Cannot parse config {file_path}: {e}") from e
        raise ConfigError(f"Unsupported config format: {file_path}")

    @staticmethod
    def list_files(directory: str, pattern: str = "*", recursive: bool = False) -> List[str]:
        """列出目录中的文件 (sorted)"""
        path = Path(directory)
        if not path.exists():
            return []
        files = path.rglob(pattern) if recursive else path.glob(pattern)
        return sorted(str(f) for f in files if f.is_file())

    @staticmethod
    def get_file_hash(file_path: str, algorithm: str = "sha256") -> str:
        """计算文件哈希值"""
        hash_obj = hashlib.new(algorithm)
        with open(file_path, 'rb') as f:
            for chunk in iter(lambda: f.read(4096), b""):
                hash_obj.update(chunk)
        return hash_obj.hexdigest()

    @staticmethod
    def save_with_metadata(payload: bytes, output_path: str, metadata: Optional[Dict[str, Any]] = None):
        """保存二进制产物和元数据 (`<path>.meta.json` sidecar)"""
        FileUtils.atomic_write_bytes(output_path, payload)
        if metadata:
            FileUtils.write_json_file(output_path + ".meta.json", metadata)

    @staticmethod
    def load_metadata(artifact_path: str) -> Optional[Dict[str, Any]]:
        """加载元数据"""
        metadata_path = artifact_path + ".meta.json"
        if Path(metadata_path).exists():
            return FileUtils.read_json_file(metadata_path)
        return None

    @staticmethod
    def read_csv_rows(file_path: str) -> List[Dict[str, str]]:
        path = Path(file_path)
        if not path.exists():
            return []
        with open(path, newline='', encoding='utf-8') as f:
            return list(csv.DictReader(f))

    @staticmethod
    def append_csv_row(file_path: str, columns: Sequence[str], row: Dict[str, Any]):
        """Append one row; the table is rewritten through a rename so a crash never leaves half a row"""
        path = Path(file_path)
        existing = path.read_text(encoding='utf-8') if path.exists() else ""
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
        if not existing:
            writer.writeheader()
        writer.writerow({k: row.get(k, "") for k in columns})
        FileUtils.write_text_file(file_path, existing + buffer.getvalue())

    @staticmethod
    def write_csv_rows(file_path: str, columns: Sequence[str], rows: List[Dict[str, Any]]):
        """Rewrite a whole table atomically"""
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in columns})
        FileUtils.write_text_file(file_path, buffer.getvalue())

    @staticmethod
    def append_jsonl(file_path: str, record: Dict[str, Any]):
        """追加一条JSON记录"""
        path = Path(file_path)
        existing = path.read_text(encoding='utf-8') if path.exists() else ""
        line = json.dumps(record, ensure_ascii=False, default=str)
        FileUtils.write_text_file(file_path, existing + line + "\n")
