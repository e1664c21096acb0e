class _BaseError(Exception):
    def __init__(
            self, *args: object, **kwargs: object
    ) -> None:
        self.stage = kwargs.pop('stage', None)
        super().__init__(*args)

    def describe(self) -> str:
        """
        One-line description used by the command line interface.

        :return: "<stage>: <message>" or just the message when no stage is known
        :rtype: str
        """
        _stage = self.stage or self.__class__.__name__
        return f"{_stage}: {self}"


class EmptySequence(_BaseError):
    pass


class RasterError(_BaseError):
    def __init__(self, *args: object, offset: int = 0, **kwargs: object) -> None:
        self.offset = offset
        kwargs.setdefault('stage', 'raster')
        super().__init__(*args, **kwargs)


class MalformedHeader(RasterError):
    pass


class UnsupportedMaxval(RasterError):
    pass


class TruncatedData(RasterError):
    pass


class MetricsError(_BaseError):
    pass


class DimensionMismatch(MetricsError):
    pass


class FrameTooSmall(MetricsError):
    pass


class CodecError(_BaseError):
    pass


class InvalidProfile(CodecError):
    pass


class MixedDimensions(CodecError):
    pass


class CorruptPayload(CodecError):
    pass


class ExternalEncoderFailure(CodecError):
    def __init__(self, *args: object, returncode: int = None, **kwargs: object) -> None:
        self.returncode = returncode
        super().__init__(*args, **kwargs)


class AugmentError(_BaseError):
    pass


class InvalidFactor(AugmentError):
    pass


class DetectorError(_BaseError):
    pass


class MalformedXml(DetectorError):
    pass


class MissingField(DetectorError):
    def __init__(self, path: str, *args: object, **kwargs: object) -> None:
        self.path = path
        super().__init__(f'Missing required element "{path}".', *args, **kwargs)


class TooManyTargets(DetectorError):
    pass


class NoGroundTruth(DetectorError):
    pass


class ClassifierError(_BaseError):
    pass


class UncalibratedThresholds(ClassifierError):
    pass


class InsufficientSamples(ClassifierError):
    def __init__(self, conditions, *args: object, **kwargs: object) -> None:
        self.conditions = list(conditions)
        _names = ", ".join(str(c) for c in self.conditions)
        super().__init__(f"Not enough labelled frames for: {_names}.", *args, **kwargs)


class CalibrationError(_BaseError):
    pass


class ControllerError(_BaseError):
    pass


class ZeroCompressedSize(ControllerError):
    pass


class MalformedReport(_BaseError):
    pass


class EBLCError(_BaseError):
    pass
