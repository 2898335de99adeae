"""In-memory end-to-end pipeline: generate -> train source -> adapt -> report.

The CLI drives the same stages through files; this module is the programmatic
path used by tests and by anyone embedding the library.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from . import adapt_gan, adapt_wgan
from .data import AdaptationDataset, ShiftConfig, generate_synthetic
from .divergence import DivergenceConfig, divergence_block
from .errors import ConfigError
from .evaluation import EvalReport, evaluate
from .nets import Network
from .source import SourceConfig, train_source
from .types import AdaptConfig

ADAPT_FNS = {"wgan": adapt_wgan.adapt, "gan": adapt_gan.adapt_gan}


@dataclass
class PipelineResult:
    report: EvalReport
    dataset: AdaptationDataset
    source_classifier: Network
    source_extractor: Network
    adapted: dict[str, Network] = field(default_factory=dict)
    histories: dict[str, object] = field(default_factory=dict)


def run_pipeline(shift: ShiftConfig | None = None,
                 source: SourceConfig | None = None,
                 adapt: AdaptConfig | None = None,
                 divergence: DivergenceConfig | None = None,
                 methods: tuple[str, ...] = ("wgan", "gan"),
                 seed: int | None = None,
                 with_divergence: bool = True) -> PipelineResult:
    """Run the full desk-scale pipeline. When ``seed`` is given it overrides
    the seed of every stage config, so one integer reproduces the whole run."""
    shift = shift or ShiftConfig()
    source = source or SourceConfig()
    adapt = adapt or AdaptConfig()
    divergence = divergence or DivergenceConfig()
    for method in methods:
        if method not in ADAPT_FNS:
            raise ConfigError(f"unknown adaptation method {method!r}")
    if seed is not None:
        shift.seed = seed
        source.seed = seed
        adapt.seed = seed
        divergence.seed = seed

    dataset = generate_synthetic(shift)
    classifier, extractor, source_history = train_source(dataset, source)

    report = EvalReport(seed=shift.seed)
    report.config = {
        "shift": asdict(shift),
        "source": _config_echo(source),
        "adapt": asdict(adapt),
        "divergence": asdict(divergence),
        "methods": list(methods),
    }
    report.add_result("non_adapted", "source", evaluate(extractor, classifier, dataset.source.test))
    report.add_result("non_adapted", "target", evaluate(extractor, classifier, dataset.target.test))

    result = PipelineResult(report, dataset, classifier, extractor)
    result.histories["source"] = source_history

    for method in methods:
        adapted, history = ADAPT_FNS[method](
            extractor, classifier, dataset.source.train,
            dataset.target.train.unlabeled(), adapt)
        result.adapted[method] = adapted
        result.histories[method] = history
        key = f"adapted_{method}"
        report.add_result(key, "source", evaluate(adapted, classifier, dataset.source.test))
        report.add_result(key, "target", evaluate(adapted, classifier, dataset.target.test))

    if with_divergence and "wgan" in result.adapted:
        report.divergence = divergence_block(
            extractor, result.adapted["wgan"],
            dataset.source.test.features, dataset.target.train.features,
            divergence)
    return result


def _config_echo(source: SourceConfig) -> dict:
    d = asdict(source)
    d["classifier_hidden"] = list(d["classifier_hidden"])
    return d
