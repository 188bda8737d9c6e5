"""Pipelined multiprocessor training schedules for spiking neural networks.

The package bundles four pieces:

* a numerical reference core for LIF networks trained with surrogate
  gradients and optional delayed weight updates (``lif``, ``layers``,
  ``training``),
* an analytical clock-cycle model for conv/fc training tasks on an
  output-stationary systolic array (``costmodel``),
* schedulers that place those tasks on multiple processors and derive the
  gradient delays each placement implies (``scheduling``),
* a steady-state pipeline simulator with communication and memory
  estimates plus sweep drivers (``pipesim``), all fronted by the
  ``spikesched`` command line tool (``cli``).
"""

from .costmodel import ArrayConfig, ConvShape, CostMatrix, FcShape, network_cost
from .lif import (
    LifParams,
    accumulator_forward,
    cross_entropy_loss,
    lif_backward,
    lif_forward,
    output_layer_grad,
)
from .errors import (
    NetworkParseError,
    NumericDomainError,
    SimulationError,
    SpikeschedError,
    StructuralError,
    TrainingError,
)
from .network import LayerSpec, LifConstants, NetworkSpec, parse_network, serialize_network
from .pipesim import CommReport, MemoryReport, ScheduleMap, SweepReport, comm_volume, memory_estimate, simulate, sweep
from .scheduling import (
    Schedule,
    SpeedupBounds,
    assign_delays,
    bounds,
    make_schedule,
    schedule_finegrained,
    schedule_layerwise,
    schedule_pipedream,
    schedule_split_backward,
)
from .training import (
    OptimizerConfig,
    SnnNetwork,
    TrainingHistory,
    load_dataset,
    save_dataset,
    synthetic_spike_task,
    toy_network_spec,
    train,
)

__version__ = "0.1.0"
