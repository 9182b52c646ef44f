'''Exception hierarchy. Every error carries a stable ``code`` and the CLI exit code it maps to.'''


class Skull2FaceError(Exception):
    code = 'Error'
    exit_code = 1

    def __init__(self, message: str, **details) -> None:
        super().__init__(message)
        self.message = message
        self.details = details

    def record(self) -> dict:
        return {'event': 'error', 'code': self.code, 'exit_code': self.exit_code,
                'message': self.message, **self.details}


class InvalidInputError(Skull2FaceError, ValueError):
    code = 'InvalidInput'
    exit_code = 2


class ManifestError(InvalidInputError):
    code = 'ManifestError'


class DuplicateSample(ManifestError):
    code = 'DuplicateSample'


class MissingFile(InvalidInputError):
    code = 'MissingFile'


class IncompleteSubject(ManifestError):
    code = 'IncompleteSubject'


class InsufficientSubjects(InvalidInputError):
    code = 'InsufficientSubjects'


class UnsupportedFormat(InvalidInputError):
    code = 'UnsupportedFormat'


class CorruptImage(InvalidInputError):
    code = 'CorruptImage'


class ImageLoadError(InvalidInputError):
    code = 'ImageLoadError'

    def __init__(self, failures: dict) -> None:
        # failures: path -> reason
        lines = '; '.join(f'{path}: {reason}' for path, reason in failures.items())
        super().__init__(f'{len(failures)} image(s) failed to load: {lines}',
                         paths=sorted(str(p) for p in failures))
        self.failures = failures


class DimMismatch(InvalidInputError):
    code = 'DimMismatch'


class NonFinite(InvalidInputError):
    code = 'NonFinite'


class DuplicateKey(InvalidInputError):
    code = 'DuplicateKey'


class WrongDomain(InvalidInputError):
    code = 'WrongDomain'


class UnresolvedSample(InvalidInputError):
    code = 'UnresolvedSample'


class BadVersion(InvalidInputError):
    code = 'BadVersion'


class CorruptCheckpoint(InvalidInputError):
    code = 'Corrupt'


class DuplicateGalleryId(InvalidInputError):
    code = 'DuplicateGalleryId'


class IdCollision(InvalidInputError):
    code = 'IdCollision'


class UnknownQuery(InvalidInputError):
    code = 'UnknownQuery'


class UnknownGalleryId(InvalidInputError):
    code = 'UnknownGalleryId'


class ConfigError(InvalidInputError):
    code = 'ConfigError'


class DivergenceError(Skull2FaceError, RuntimeError):
    code = 'Divergence'
    exit_code = 1
