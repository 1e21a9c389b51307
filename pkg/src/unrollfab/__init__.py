"""unrollfab: weight-specialized unrolled DNN kernels as FPGA netlists.

Generates pipelined dataflow netlists for GEMM and convolution kernels whose
fixed integer weights (with prescribed unstructured sparsity and precision)
are baked into the logic, emits synthesizable SystemVerilog, verifies every
kernel against exact golden models, and maps the netlists onto parameterized
logic-block architectures to study area, delay, and area-delay product.
"""

from .errors import (EmissionError, GraphError, MappingError, ParameterError,
                     ShapeError, SimulationError)
from .tensors import (InputStimulus, WeightTensor, dump_tensor, generate_inputs,
                      generate_weights, load_tensor, sparsity_grid, value_range)
from .graph import DataflowGraph, Node
from .multiplier import csd_digits, csd_terms, specialize_multiplier
from .kernels import (KernelConfig, ThroughputContract, build_conv, build_gemms,
                      build_gemmt, build_kernel, expected_contract, pipeline,
                      throughput_contract)
from .golden import golden_conv, golden_gemm, golden_outputs
from .simulate import (EquivalenceResult, SimTrace, check_equivalence, run,
                       simulate_kernel)
from .rtl import (EmissionConfig, emit, emit_flow_scripts, emit_testbench,
                  parse_ports, write_design)
from .costmodel import (ARCH_PRESETS, ArchParams, BleNetlist, CostReport,
                        adp_table, arch_pins, decompose, estimate, get_arch,
                        load_arch_json, pack)
from .presets import PRESET_NAMES, STUDY_KERNELS, preset_config
from .sweep import SweepConfig, case_study, run_sweep, trend_report

__version__ = "0.1.0"
