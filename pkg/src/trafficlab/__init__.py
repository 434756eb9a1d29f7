"""trafficlab: smart-home traffic-rate metadata attacks and defenses.

Reproduces device identification from windowed rate statistics, behavior
inference from rate changes, and four defense transforms (blocking, DNS
concealment, tunneling, shaping/injection) with an evaluation harness.
"""

from .adversary import (
    DetectorParams,
    FeatureVector,
    RateSeries,
    bin_rates,
    identify_by_dns,
    infer_events,
    split_streams,
    windows_to_features,
)
from .config import DefenseSpec, ExperimentConfig, load_experiment_config, resolve_scenario
from .defenses import (
    DefenseCost,
    block_streams,
    conceal_dns,
    delay_randomize,
    inject_decoys,
    shape_constant_rate,
    tunnel,
)
from .harness import run_experiment, score_events, sweep
from .knn import AnalysisParams, RateKnnClassifier, stratified_cv
from .synth import (
    BehaviorTimeline,
    Scenario,
    builtin_scenarios,
    get_scenario,
    render_traffic,
    sample_timeline,
)
from .trace import (
    AdversaryView,
    ObservedTrace,
    PacketRecord,
    Trace,
    load_trace,
    project_view,
    save_trace,
)

__version__ = "0.1.0"
