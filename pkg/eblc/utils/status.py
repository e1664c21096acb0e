from dataclasses import dataclass


@dataclass(eq=False)
class _Status:
    status: str = ""
    message: str = ""

    def __eq__(self, __value: object) -> bool:
        if isinstance(__value, _Status):
            return __value.status == self.status
        return __value == self.status

    def __hash__(self) -> int:
        return hash(self.status)

    def __str__(self) -> str:
        return self.status

    def __repr__(self) -> str:
        return self.status


@dataclass(eq=False)
class Ok(_Status):
    """
    The frame was processed with the active condition and nothing changed.
    """
    status: str = "ok"
    message: str = "The frame was processed with the active profile."


@dataclass(eq=False)
class Classified(_Status):
    """
    The classifier ran on this frame and the vote did not change the active condition.
    """
    status: str = "classified"
    message: str = "The classifier ran; the active condition is unchanged."


@dataclass(eq=False)
class Switched(_Status):
    """
    A strict majority of the vote window agreed on a new condition. The new
    compression profile takes effect from the next frame.
    """
    status: str = "switched"
    message: str = "The active condition changes from the next frame."


@dataclass(eq=False)
class ClassifierFailed(_Status):
    """
    The classifier raised. The previous condition stays active; it is a good
    practice to pass the reason (exception) in the message.
    """
    status: str = "classifier failed"
    message: str = "The classifier failed; the previous condition was kept."


@dataclass(eq=False)
class FallbackCrf(_Status):
    """
    The reference table has no CRF satisfying the accuracy threshold for the
    active condition, so the frame was transmitted at CRF 0.
    """
    status: str = "fallback crf"
    message: str = "No CRF satisfies the accuracy threshold; CRF 0 was used."
