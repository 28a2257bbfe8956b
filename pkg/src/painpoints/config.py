"""Pipeline configuration: one INI file with a section per stage."""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

from painpoints.classifier import TrainConfig
from painpoints.corpus import ConfigError, FilterConfig
from painpoints.itm import STOP_METRICS, ItmConfig
from painpoints.painpoint import ExtractConfig
from painpoints.topics import DEFAULT_K_CANDIDATES, MergeConfig

TOPIC_SCOPES = ("negative", "all")

DEFAULT_INI = """\
# painpoints pipeline configuration. Relative paths resolve against this file.

[pipeline]
# corpus file (jsonl or csv); the format follows the extension unless set
input =
format =
output_dir = run
seed = 0
# empty = bundled English list
stopwords =
# optional TSV of POS/chunk annotations overriding the built-in chunker
annotations =
# optional ground-truth sidecar written by `painpoints synth`
truth =
# which reviews feed topic modeling: negative (labelled negative) or all
topic_scope = negative
figures = true

[filter]
min_tokens = 10
dedupe = true
require_keyword = true
# a word is a keyword when it occurs this often across negative reviews
min_negative_freq = 5
# one "pattern => replacement" per line, applied in order
normalization_rules =

[train]
learning_rate = 0.01
epochs = 20
batch_size = 64
optimizer = adam
embed_dim = 64
hidden = 0
init_scale = 0.1

[topics]
embed_dim = 64
# an integer, or auto for the best silhouette among k_candidates
k = auto
k_candidates = 8, 12, 16, 20, 24
outlier_percentile = 0.2

[merge]
s = 0.1
top_r = 10
min_topic_size = 5
noun_filter = true

[itm]
# search space used in practice: 0.4, 0.5, 0.6, 0.7
tau = 0.6
max_steps = 100
patience = 2
epochs_per_step = 1
warmup_epochs = 5
cold_start = false
stop_metrics = npmi, outlier_ratio, label_change_count

[extract]
g = 3
n_sentiment = 30
n_per_topic = 10
attribution_method = integrated_gradients
ig_steps = 64
"""


@dataclass(frozen=True)
class TopicInitConfig:
    embed_dim: int = 64
    k: int | None = None  # None = choose by silhouette
    k_candidates: tuple[int, ...] = DEFAULT_K_CANDIDATES
    outlier_percentile: float = 0.2

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ConfigError("topics.embed_dim must be >= 1")
        if self.k is not None and self.k < 2:
            raise ConfigError("topics.k must be >= 2")
        if not self.k_candidates:
            raise ConfigError("topics.k_candidates is empty")
        if not 0 <= self.outlier_percentile < 1:
            raise ConfigError("topics.outlier_percentile must be in [0, 1)")


@dataclass(frozen=True)
class PipelineConfig:
    input: Path | None = None
    format: str | None = None
    output_dir: Path = Path("run")
    seed: int = 0
    stopwords: Path | None = None
    annotations: Path | None = None
    truth: Path | None = None
    topic_scope: str = "negative"
    figures: bool = True
    min_negative_freq: int = 5
    filter: FilterConfig = FilterConfig()
    train: TrainConfig = TrainConfig()
    topics: TopicInitConfig = TopicInitConfig()
    merge: MergeConfig = MergeConfig()
    itm: ItmConfig = ItmConfig()
    extract: ExtractConfig = ExtractConfig()
    source: str = field(default=DEFAULT_INI, repr=False, compare=False)

    def __post_init__(self):
        if self.topic_scope not in TOPIC_SCOPES:
            raise ConfigError(f"pipeline.topic_scope must be one of {TOPIC_SCOPES}")
        if self.format not in (None, "jsonl", "csv"):
            raise ConfigError("pipeline.format must be jsonl or csv")
        if self.min_negative_freq < 1:
            raise ConfigError("filter.min_negative_freq must be >= 1")

    def with_overrides(self, **kw) -> "PipelineConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "seed" in kw:
            seed = kw["seed"]
            kw["train"] = replace(self.train, seed=seed)
            kw["itm"] = replace(self.itm, train=replace(self.itm.train, seed=seed))
        for key in ("input", "output_dir", "truth", "annotations", "stopwords"):
            if key in kw:
                kw[key] = Path(kw[key])
        return replace(self, **kw)

    def canonical(self) -> str:
        """Stable text form of every setting that influences artifacts."""
        lines = [
            f"input={self.input}", f"format={self.format}", f"seed={self.seed}",
            f"stopwords={self.stopwords}", f"annotations={self.annotations}", f"truth={self.truth}",
            f"topic_scope={self.topic_scope}", f"figures={self.figures}",
            f"min_negative_freq={self.min_negative_freq}",
            f"filter={self.filter!r}", f"train={self.train!r}", f"topics={self.topics!r}",
            f"merge={self.merge!r}", f"itm={self.itm!r}",
            f"extract={replace(self.extract, stopwords=frozenset())!r}",
        ]
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def check_inputs(self) -> None:
        """Fail before any stage runs when a referenced file is missing."""
        for name in ("input", "stopwords", "annotations", "truth"):
            p = getattr(self, name)
            if p is not None and not p.is_file():
                raise ConfigError(f"pipeline.{name}: file not found: {p}")


def _path(value: str, base: Path) -> Path | None:
    value = value.strip()
    if not value:
        return None
    p = Path(value).expanduser()
    return p if p.is_absolute() else base / p


def _ints(value: str) -> tuple[int, ...]:
    return tuple(int(v) for v in value.replace(",", " ").split())


def _rules(value: str) -> tuple[tuple[str, str], ...]:
    out = []
    for line in value.splitlines():
        if not line.strip():
            continue
        if "=>" not in line:
            raise ConfigError(f"filter.normalization_rules: expected 'pattern => replacement', got {line!r}")
        pat, rep = line.split("=>", 1)
        out.append((pat.strip(), rep.strip()))
    return tuple(out)


def parse(text: str, base: Path = Path(".")) -> PipelineConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=None, interpolation=None)
    cp.read_string(DEFAULT_INI)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    known = configparser.ConfigParser(interpolation=None)
    known.read_string(DEFAULT_INI)
    for section in cp.sections():
        if not known.has_section(section):
            raise ConfigError(f"unknown section [{section}]")
        for key in cp[section]:
            if not known.has_option(section, key):
                raise ConfigError(f"unknown key {section}.{key}")

    try:
        p, f, t, tp, m, i, e = (cp[s] for s in ("pipeline", "filter", "train", "topics", "merge", "itm", "extract"))
        seed = p.getint("seed")
        train = TrainConfig(
            learning_rate=t.getfloat("learning_rate"), epochs=t.getint("epochs"), batch_size=t.getint("batch_size"),
            optimizer=t.get("optimizer").strip(), seed=seed, embed_dim=t.getint("embed_dim"),
            hidden=t.getint("hidden"), init_scale=t.getfloat("init_scale"),
        )
        k = tp.get("k").strip().lower()
        stop_metrics = tuple(s.strip() for s in i.get("stop_metrics").split(",") if s.strip())
        unknown = set(stop_metrics) - set(STOP_METRICS)
        if unknown:
            raise ConfigError(f"itm.stop_metrics: unknown metrics {sorted(unknown)}")
        return PipelineConfig(
            input=_path(p.get("input"), base),
            format=p.get("format").strip() or None,
            output_dir=_path(p.get("output_dir"), base) or base / "run",
            seed=seed,
            stopwords=_path(p.get("stopwords"), base),
            annotations=_path(p.get("annotations"), base),
            truth=_path(p.get("truth"), base),
            topic_scope=p.get("topic_scope").strip(),
            figures=p.getboolean("figures"),
            min_negative_freq=f.getint("min_negative_freq"),
            filter=FilterConfig(
                min_tokens=f.getint("min_tokens"), dedupe=f.getboolean("dedupe"),
                require_keyword=f.getboolean("require_keyword"),
                normalization_rules=_rules(f.get("normalization_rules")),
            ),
            train=train,
            topics=TopicInitConfig(
                embed_dim=tp.getint("embed_dim"), k=None if k == "auto" else int(k),
                k_candidates=_ints(tp.get("k_candidates")), outlier_percentile=tp.getfloat("outlier_percentile"),
            ),
            merge=MergeConfig(s=m.getfloat("s"), top_r=m.getint("top_r"), min_topic_size=m.getint("min_topic_size"),
                              noun_filter=m.getboolean("noun_filter")),
            itm=ItmConfig(
                tau=i.getfloat("tau"), max_steps=i.getint("max_steps"), patience=i.getint("patience"),
                epochs_per_step=i.getint("epochs_per_step"), warmup_epochs=i.getint("warmup_epochs"),
                cold_start=i.getboolean("cold_start"), train=train, stop_metrics=stop_metrics,
            ),
            extract=ExtractConfig(
                g=e.getint("g"), n_sentiment=e.getint("n_sentiment"), n_per_topic=e.getint("n_per_topic"),
                attribution_method=e.get("attribution_method").strip(), ig_steps=e.getint("ig_steps"),
            ),
            source=text,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        # value errors from the module configs and from int()/float() parsing
        raise ConfigError(str(exc)) from None


def load(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse(path.read_text(encoding="utf-8"), path.parent)
