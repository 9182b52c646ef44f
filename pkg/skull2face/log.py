import json
import logging
import sys
from typing import Optional


class JsonLineFormatter(logging.Formatter):
    '''One JSON object per record, extra fields passed via ``extra={'fields': {...}}`` included'''
    def format(self, record: logging.LogRecord) -> str:
        payload = {'level': record.levelname.lower(), 'logger': record.name,
                   'message': record.getMessage()}
        for key, value in record.__dict__.get('fields', {}).items():
            payload[key] = value
        return json.dumps(payload, sort_keys=True, default=str)


class _StderrHandler(logging.StreamHandler):
    '''Writes to whatever ``sys.stderr`` is at emit time'''
    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value) -> None:
        pass


def configure(level: int = logging.INFO, fmt: str = 'text', stream=None) -> None:
    root = logging.getLogger('skull2face')
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(stream) if stream is not None else _StderrHandler()
    if fmt == 'json':
        handler.setFormatter(JsonLineFormatter())
    else:
        handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def get_logger(name: Optional[str] = None) -> logging.Logger:
    return logging.getLogger(name or 'skull2face')
