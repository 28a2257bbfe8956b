"""JSON and markdown reports built from whatever stage artifacts exist."""

from __future__ import annotations

import json
from pathlib import Path

from painpoints import pipeline as pl
from painpoints import topics
from painpoints.painpoint import PainPointSet, read_painpoints

SECTIONS = ("sentiment_painpoints", "topic_painpoints", "topic_summaries", "metrics")
FIGURE_DIR = "figures"


def _cell(value) -> str:
    return str(value).replace("|", "\\|").replace("\n", " ")


def _table(header: list[str], rows: list[list]) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out.extend("| " + " | ".join(_cell(v) for v in row) + " |" for row in rows)
    return out


def collect(ws: pl.Workspace) -> dict:
    """The report as plain data; sections whose artifacts are absent are listed under ``missing``."""
    data: dict = {"config_hash": ws.config.digest(), "missing": []}
    sets: list[PainPointSet] = []
    if ws.path(pl.PAINPOINTS_JSON).is_file():
        sets = read_painpoints(ws.path(pl.PAINPOINTS_JSON))
    sentiment = [s for s in sets if s.scope == "sentiment"]
    per_topic = [s for s in sets if s.scope.startswith("topic:")]
    data["sentiment_painpoints"] = sentiment[0].to_dict() if sentiment else None
    data["topic_painpoints"] = [s.to_dict() for s in per_topic] or None
    if ws.path(pl.SUMMARIES_FINAL).is_file():
        summ = topics.read_summaries(ws.path(pl.SUMMARIES_FINAL))
        data["topic_summaries"] = [summ[t].to_dict() for t in sorted(summ)] or None
    else:
        data["topic_summaries"] = None
    data["metrics"] = json.loads(ws.path(pl.METRICS).read_text(encoding="utf-8")) \
        if ws.path(pl.METRICS).is_file() else None
    data["missing"] = [s for s in SECTIONS if data[s] is None]
    return data


def render_markdown(data: dict, figures: list[str]) -> str:
    lines = ["# Pain-point report", "", f"Config hash: `{data['config_hash']}`", ""]

    lines += ["## Sentiment pain points", ""]
    sent = data["sentiment_painpoints"]
    if sent is None:
        lines += ["_Stage missing: no sentiment pain points were extracted._", ""]
    else:
        rows = [[i, e["word"], e["frequency"], ", ".join(e["examples"])] for i, e in enumerate(sent["entries"], 1)]
        lines += _table(["rank", "word", "reviews", "examples"], rows) + [""]

    lines += ["## Topic pain points", ""]
    summaries = {s["topic"]: s for s in data["topic_summaries"] or []}
    if data["topic_painpoints"] is None:
        lines += ["_Stage missing: no topic pain points were extracted._", ""]
    else:
        for s in data["topic_painpoints"]:
            topic = int(s["scope"].split(":")[1])
            summ = summaries.get(topic)
            head = f"### Topic {topic}"
            if summ is not None:
                head += f" ({summ['size']} reviews; {', '.join(summ['words'][:5])})"
            rows = [[i, e["word"], e["frequency"], ", ".join(e["examples"])] for i, e in enumerate(s["entries"], 1)]
            lines += [head, ""] + _table(["rank", "word", "reviews", "examples"], rows) + [""]

    lines += ["## Topic summaries", ""]
    if data["topic_summaries"] is None:
        lines += ["_Stage missing: no final topic summaries._", ""]
    else:
        rows = [[s["topic"], s["size"], ", ".join(s["words"]), ", ".join(s["keywords"])]
                for s in data["topic_summaries"]]
        lines += _table(["topic", "size", "representative words", "keywords"], rows) + [""]

    lines += ["## Metrics", ""]
    m = data["metrics"]
    if m is None:
        lines += ["_Stage missing: evaluation was not run._", ""]
    else:
        rows = []
        for name in ("initial", "merged", "final"):
            t = m.get("topics", {}).get(name)
            if t is not None:
                coh = t["coherence"]["mean"] if t.get("coherence") else None
                rows.append([name, t["n_topics"], f"{t['outlier_ratio']:.4f}",
                             "n/a" if coh is None else f"{coh:.4f}"])
        if rows:
            lines += _table(["assignment", "topics", "outlier ratio", "mean NPMI"], rows) + [""]
        if "itm" in m:
            lines += [f"Topic modification ran {m['itm']['steps']} step(s), stopped by: {m['itm']['stop_reason']}.", ""]
        sent_m = m.get("sentiment")
        if sent_m and sent_m.get("test"):
            t = sent_m["test"]
            lines += ["Sentiment classifier on the held-out test split:", ""]
            lines += _table(["accuracy", "macro F1"], [[f"{t['accuracy']:.4f}", f"{t['macro_f1']:.4f}"]]) + [""]
        gt = m.get("ground_truth")
        if gt:
            lines += ["Against ground truth:", ""]
            rows = [[k, f"{gt['purity'][k]:.4f}"] for k in ("initial", "merged", "final") if k in gt["purity"]]
            lines += _table(["assignment", "purity"], rows) + [""]
            pr = gt.get("planted_recovery")
            if pr:
                rows = [[t, v["matched_topic"], f"{v['recall']:.2f}", ", ".join(v["found"])]
                        for t, v in pr["per_topic"].items()]
                rows.append(["sentiment", "-", f"{pr['sentiment']['recall']:.2f}", ", ".join(pr["sentiment"]["found"])])
                lines += _table(["true topic", "matched topic", "planted recall", "found"], rows) + [""]

    if figures:
        lines += ["## Figures", ""] + [f"![{Path(f).stem}]({f})" for f in figures] + [""]
    if data["missing"]:
        lines += ["## Missing stages", ""] + [f"- {s}" for s in data["missing"]] + [""]
    return "\n".join(lines)


def render_figures(ws: pl.Workspace, data: dict) -> list[str]:
    from painpoints import plotting

    fig_dir = ws.path(FIGURE_DIR)
    fig_dir.mkdir(exist_ok=True)
    out = []
    sent = data["sentiment_painpoints"]
    if sent and sent["entries"]:
        plotting.painpoint_bars([e["word"] for e in sent["entries"]], [e["frequency"] for e in sent["entries"]],
                                "Sentiment pain points", fig_dir / "sentiment_painpoints.png")
        out.append(f"{FIGURE_DIR}/sentiment_painpoints.png")
    for s in data["topic_painpoints"] or []:
        if not s["entries"]:
            continue
        name = s["scope"].replace(":", "_") + "_painpoints.png"
        plotting.painpoint_bars([e["word"] for e in s["entries"]], [e["frequency"] for e in s["entries"]],
                                f"Pain points, {s['scope'].replace(':', ' ')}", fig_dir / name)
        out.append(f"{FIGURE_DIR}/{name}")
    hist = ws.path(pl.ITM_HISTORY)
    if hist.is_file():
        recs = [json.loads(line) for line in hist.read_text(encoding="utf-8").splitlines() if line]
        if recs:
            plotting.itm_history([r["step"] for r in recs], [r["metrics"].get("outlier_ratio", float("nan"))
                                                             for r in recs],
                                 [r["n_changes"] for r in recs], fig_dir / "itm_history.png")
            out.append(f"{FIGURE_DIR}/itm_history.png")
    if ws.path(pl.TOPICS_FINAL).is_file():
        sizes = topics.TopicAssignment.from_csv(ws.path(pl.TOPICS_FINAL)).sizes()
        plotting.topic_sizes(sizes, fig_dir / "topic_sizes.png")
        out.append(f"{FIGURE_DIR}/topic_sizes.png")
    return out


def write_report(ws: pl.Workspace) -> list[str]:
    data = collect(ws)
    figures = render_figures(ws, data) if ws.config.figures else []
    data["figures"] = figures
    ws.path(pl.REPORT_JSON).write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")
    ws.path(pl.REPORT_MD).write_text(render_markdown(data, figures), encoding="utf-8")
    return [pl.REPORT_JSON, pl.REPORT_MD] + figures
