from .client import EBLC, HarnessConfig
from .controller import EBLCController, ControllerConfig
from .calibrate import Calibrator, CalibrationConfig, ReferenceTable
from .utils.frame import Frame
from .utils.conditions import EnvCondition
