import os
import json
import hashlib
import tempfile
from typing import Any, Union


def atomic_write(path: str, content: Union[bytes, str]) -> None:
    """
    Write a file atomically: the content goes to a temporary file in the same
    folder which is then renamed over the destination.

    :param path: destination path
    :type path: str
    :param content: file content
    :type content: Union[bytes, str]
    """
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    if isinstance(content, str):
        content = content.encode('utf-8')
    _fd, _tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(_fd, 'wb') as file:
            file.write(content)
        os.replace(_tmp, path)
    except BaseException:
        if os.path.exists(_tmp):
            os.remove(_tmp)
        raise


def canonical_json(data: Any) -> str:
    """
    Deterministic JSON text (sorted keys, fixed separators).

    :param data: JSON-serialisable object
    :type data: Any
    :return: JSON text
    :rtype: str
    """
    return json.dumps(data, sort_keys=True, separators=(',', ':'), ensure_ascii=False)


def write_json(path: str, data: Any) -> None:
    atomic_write(path, json.dumps(data, sort_keys=True, indent=4, ensure_ascii=False) + "\n")


def read_json(path_or_text: str) -> Any:
    """
    Read JSON either from a file path or from an inline JSON string.

    :param path_or_text: path of a JSON file or JSON text
    :type path_or_text: str
    :return: decoded object
    :rtype: Any
    """
    if os.path.isfile(path_or_text):
        with open(path_or_text, 'r', encoding='utf-8') as file:
            return json.load(file)
    return json.loads(path_or_text)


def sha256_hex(*chunks: Union[bytes, str]) -> str:
    """
    SHA-256 over the concatenation of the supplied chunks.

    :return: hexadecimal digest
    :rtype: str
    """
    _hash = hashlib.sha256()
    for chunk in chunks:
        if isinstance(chunk, str):
            chunk = chunk.encode('utf-8')
        _hash.update(chunk)
    return _hash.hexdigest()
