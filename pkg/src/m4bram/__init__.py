"""M4BRAM block simulator and mixed-precision accelerator workbench."""

from .block import CimInstruction, M4Bram, Mode, Phase, Write, readout, run_mac2
from .dse import GX400, GX650, GX_DSP, GX_M4, FpgaTarget, search
from .dsp_packing import INTEL, XILINX, packing_factor, verify_packing
from .engine_perf import Arch, bramac_peak_rate, m4bram_peak_rate, profile
from .hetero_dla import AccelConfig, LayerShape, TilingConfig, simulate_layer, simulate_network
from .networks import NetworkDesc, builtin, load_network
from .precision import Kind, PrecisionConfig, Pumping, Variant

__version__ = "0.1.0"

__all__ = [
    "AccelConfig", "Arch", "CimInstruction", "FpgaTarget", "GX400", "GX650", "GX_DSP", "GX_M4",
    "INTEL", "Kind", "LayerShape", "M4Bram", "Mode", "NetworkDesc", "Phase", "PrecisionConfig",
    "Pumping", "TilingConfig", "Variant", "Write", "XILINX", "bramac_peak_rate", "builtin",
    "load_network", "m4bram_peak_rate", "packing_factor", "profile", "readout", "run_mac2", "search",
    "simulate_layer", "simulate_network", "verify_packing",
]
