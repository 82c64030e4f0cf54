"""``echo-sonar`` command line: simulate, preprocess, train, eval, activate.

Every command writes ``resolved_config.yaml`` into its output directory
first; rerunning with that file alone reproduces the run. Exit status is 0
only when all outputs were written.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import acoustic_sim as sim
from . import pose as posemod
from .chirp import ChirpSpec
from .config import COMMANDS, ConfigError, dump_config, load_config
from .dataset import features as feat
from .dataset import formats
from .errors import EchoSonarError
from .pipeline import SubjectProfile, preprocess_session, room_clutter, simulate_session
from .regressor import checkpoint as ckmod
from .regressor.data import WindowSet, concat, split_holdout
from .regressor.model import ModelConfig
from .regressor.train import evaluate, stage_steps, train_curriculum
from .skeleton import HandKinematicParams, hand_pose_from_params

log = logging.getLogger("echosonar")


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _scene(cfg: dict) -> sim.Scene:
    sc = cfg["scene"]
    static = room_clutter(sc["room_id"], cfg["seed"], int(sc["clutter_objects"]))
    static += [sim.Scatterer(tuple(s["position"]), float(s.get("reflectivity", sim.JOINT_REFLECTIVITY)))
               for s in sc["static_scatterers"]]
    return sim.Scene(
        speaker_pos=tuple(sc["speaker_pos"]),
        mics=sim.MicArrayGeometry.uma8(sc["mic_radius_m"], sc["mic_height_m"]),
        static_scatterers=static,
        surface_plane_enabled=bool(sc["surface_plane_enabled"]),
        noise_snr_db=sc["noise_snr_db"],
        ultrasound_gain_db=float(sc["ultrasound_gain_db"]),
        start_offset_samples=int(sc["start_offset_samples"]),
        audible_noise_snr_db=sc["audible_noise_snr_db"],
        noise_seed=cfg["seed"],
    )


def _subject(cfg: dict) -> SubjectProfile:
    s = cfg["simulate"]
    prof = SubjectProfile.from_seed(s["subject_id"], sum(s["subject_id"].encode()))
    if s["hand_scale"] is not None:
        prof = SubjectProfile(prof.subject_id, float(s["hand_scale"]), prof.wrist_center_m)
    return prof


def _rel(path: Path, base: Path) -> str:
    return os.path.relpath(path, base)


def _manifests(paths) -> list:
    if not paths:
        raise ConfigError("no manifests given")
    return [formats.read_manifest(p) for p in paths]


def _write_csv(path: Path, header, rows) -> None:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    formats.atomic_write(path, out.getvalue().encode("utf-8"))


def _read_window_index(path: Path) -> tuple:
    rows = list(csv.reader(io.StringIO(path.read_text())))
    if not rows or rows[0] != ["window", "end_index", "shift", "end_timestamp_us"]:
        raise formats.FormatError(f"{path} is not a window index")
    a = np.array([[int(v) for v in r] for r in rows[1:]], dtype=np.int64).reshape(-1, 4)
    return a[:, 1], a[:, 2], a[:, 3]


def load_windows(m: formats.SessionManifest) -> WindowSet:
    """Labelled windows of a preprocessed session (stream tensor + index + labels)."""
    stream = formats.read_tensor(m.file("features"))
    end_idx, shifts, ts = _read_window_index(m.file("windows"))
    lts, labels = formats.read_pose_csv(m.file("labels"))
    if len(lts) != len(end_idx) or np.any(lts != ts):
        raise formats.FormatError(f"session {m.session_id}: labels and window index disagree")
    n = len(end_idx)
    return WindowSet([stream], np.zeros(n, dtype=np.int64), end_idx, shifts, labels.reshape(n, -1),
                     np.array([m.session_id] * n, dtype=object))


def _model_config(cfg: dict) -> ModelConfig:
    mc = dict(cfg["train"]["model"])
    mc["conv_channels"] = tuple(mc["conv_channels"])
    return ModelConfig(seed=cfg["seed"], **mc)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg: dict, out: Path) -> list:
    s = cfg["simulate"]
    spec = ChirpSpec.from_dict(cfg["chirp"])
    subject = _subject(cfg)
    ses = simulate_session(s["kind"], float(s["duration_s"]), cfg["seed"], spec=spec, subject=subject,
                           scene=_scene(cfg), reflectivity_per_joint=float(cfg["scene"]["reflectivity_per_joint"]),
                           template_every=int(s["template_every"]))
    sid = s["session_id"] or f"{subject.subject_id}_{s['kind']}_{cfg['seed']}"
    audio, poses = out / f"{sid}.bvau", out / f"{sid}.poses.csv"
    formats.write_audio(audio, ses.recording)
    formats.write_pose_csv(poses, ses.gt_times_us, ses.gt_joints_mm)
    files = {"audio": audio.name, "poses": poses.name}
    extra = {"template_intervals_us": [[int(round(a * 1e6)), int(round(b * 1e6))]
                                       for a, b in ses.trajectory.template_intervals]}
    if ses.trajectory.template_intervals:
        tpl = out / f"{sid}.template.csv"
        formats.write_pose_csv(tpl, [0], hand_pose_from_params(
            HandKinematicParams(flexion=sim.LOVE_FLEXION), subject.hand_model).joints[None])
        files["template"] = tpl.name
    m = formats.SessionManifest(sid, subject.subject_id, s["kind"], spec, files, cfg["seed"],
                                cfg["scene"]["room_id"], start_offset_samples=int(cfg["scene"]["start_offset_samples"]),
                                extra=extra)
    mpath = out / f"{sid}.manifest.yaml"
    formats.write_manifest(mpath, m)
    m.path = mpath
    m.validate_files()
    return [mpath]


def cmd_preprocess(cfg: dict, out: Path) -> list:
    p = cfg["preprocess"]
    shifts = _shift_set(int(p["augment"]))
    written = []
    for m in _manifests(p["manifests"]):
        rec = formats.read_audio(m.file("audio"))
        ts, joints = formats.read_pose_csv(m.file("poses"))
        pre = preprocess_session(rec, m.chirp, ts, joints, stride=int(p["stride"]), cutoff_hz=float(p["cutoff_hz"]))
        ws = pre.window_set(m.session_id)
        if shifts:
            ws = ws.augmented(shifts, m.chirp.cell_size_m)
            ws = ws.subset(np.lexsort((ws.shifts, ws.end_idx)))  # label timestamps must be sorted
        end_ts = pre.slice_end_us[ws.end_idx]
        sid = m.session_id
        fpath, wpath, lpath = out / f"{sid}.features.bvtn", out / f"{sid}.windows.csv", out / f"{sid}.labels.csv"
        formats.write_tensor(fpath, pre.stream)
        _write_csv(wpath, ["window", "end_index", "shift", "end_timestamp_us"],
                   [[k, int(e), int(s), int(t)] for k, (e, s, t) in enumerate(zip(ws.end_idx, ws.shifts, end_ts))])
        formats.write_pose_csv(lpath, end_ts, ws.labels.reshape(-1, 21, 3))
        files = {role: _rel(m.file(role).resolve(), out.resolve()) for role in m.files}
        files.update({"features": fpath.name, "windows": wpath.name, "labels": lpath.name})
        extra = dict(m.extra, n_windows=len(ws), n_dropped=pre.n_dropped, max_gap_us=pre.max_gap_us,
                     stride=int(p["stride"]), shifts=list(shifts),
                     anchor_cell=[int(a) for a in pre.processed.anchor.anchor_cell])
        nm = formats.SessionManifest(sid, m.subject_id, m.stage, m.chirp, files, m.seed, m.room_id,
                                     start_offset_samples=m.start_offset_samples, extra=extra)
        mpath = out / f"{sid}.manifest.yaml"
        formats.write_manifest(mpath, nm)
        nm.path = mpath
        nm.validate_files()
        log.info("%s: %d windows (%d dropped, max gap %d us)", sid, len(ws), pre.n_dropped, pre.max_gap_us)
        written.append(mpath)
    return written


def _shift_set(n: int) -> tuple:
    """The first ``n`` of +-1, +-2, +-3."""
    order = (1, -1, 2, -2, 3, -3)
    return tuple(sorted(order[:n]))


def _stages(manifests) -> list:
    return [(stage, concat([load_windows(m) for m in ms])) for stage, ms in feat.curriculum_order(manifests)]


def _train(cfg: dict, manifests, val_manifests, out: Path, curriculum: bool) -> list:
    mc = _model_config(cfg)
    stages = _stages(manifests)
    if val_manifests:
        val = concat([load_windows(m) for m in val_manifests])
    else:
        rng = np.random.default_rng(cfg["seed"])
        stages = [(tag, *split_holdout(d, float(cfg["train"]["val_fraction"]), rng)) for tag, d in stages]
        val = concat([v for _, _, v in stages])
        stages = [(tag, d) for tag, d, _ in stages]
    if not curriculum:
        total = sum(stage_steps(mc, len(d)) for _, d in stages)
        pooled = concat([d for _, d in stages])
        return train_curriculum([("plain", pooled)], mc, val=val, checkpoint_dir=out, steps=[total]), val
    return train_curriculum(stages, mc, val=val, checkpoint_dir=out), val


def cmd_train(cfg: dict, out: Path) -> list:
    t = cfg["train"]
    manifests = _manifests(t["manifests"])
    val_m = [formats.read_manifest(p) for p in t["val_manifests"]]
    cks, val = _train(cfg, manifests, val_m, out, bool(t["curriculum"]))
    final = out / "final.bvck"
    ckmod.save_checkpoint(final, cks[-1])
    hist = cks[-1].history
    keys = sorted({k for h in hist for k in h})
    _write_csv(out / "history.csv", keys, [[h.get(k, "") for k in keys] for h in hist])
    return [final, out / "history.csv"]


def _report_rows(tag: str, rep) -> list:
    rows = list(csv.reader(io.StringIO(rep.to_csv())))[1:]
    return [[tag] + r for r in rows]


def cmd_eval(cfg: dict, out: Path) -> list:
    e = cfg["eval"]
    manifests = _manifests(e["manifests"])
    rows, summary = [], []
    if e["cv"] == "none":
        if not e["checkpoint"]:
            raise ConfigError("eval.checkpoint is required when eval.cv is none")
        ck = ckmod.load_checkpoint(e["checkpoint"])
        rep = evaluate(ck, concat([load_windows(m) for m in manifests]))
        rows += _report_rows("all", rep)
        summary.append(["all", rep.n_samples, rep.mae_mm, rep.euclid_mean_mm, rep.euclid_median_mm])
    else:
        key = "subject_id" if e["cv"] == "subject" else "room_id"
        for group, train_m, test_m in feat.leave_one_group_out(manifests, key):
            fold_dir = out / f"fold_{group}"
            fold_dir.mkdir(parents=True, exist_ok=True)
            cks, _ = _train(cfg, train_m, [], fold_dir, bool(cfg["train"]["curriculum"]))
            rep = evaluate(cks[-1], concat([load_windows(m) for m in test_m]))
            rows += _report_rows(str(group), rep)
            summary.append([group, rep.n_samples, rep.mae_mm, rep.euclid_mean_mm, rep.euclid_median_mm])
    _write_csv(out / "metrics.csv", ["fold", "group", "name", "mae_mm", "euclid_mm"], rows)
    _write_csv(out / "summary.csv", ["fold", "n_samples", "mae_mm", "euclid_mean_mm", "euclid_median_mm"],
               [[g, n, repr(a), repr(b), repr(c)] for g, n, a, b, c in summary])
    return [out / "metrics.csv", out / "summary.csv"]


def cmd_activate(cfg: dict, out: Path) -> list:
    a = cfg["activate"]
    intervals = None
    if a["poses"]:
        ts, joints = formats.read_pose_csv(a["poses"])
        template_pose = hand_pose_from_params(HandKinematicParams(flexion=sim.LOVE_FLEXION))
    else:
        subject = _subject(cfg)
        traj = sim.gesture_trajectory("mixed", float(a["duration_s"]), cfg["seed"],
                                      wrist_center_m=subject.wrist_center_m, template_every=int(a["template_every"]))
        joints = traj.poses_mm(subject.hand_model)
        ts = np.rint(traj.times_s * 1e6).astype(np.int64)
        intervals = [(int(round(x * 1e6)), int(round(y * 1e6))) for x, y in traj.template_intervals]
        template_pose = hand_pose_from_params(HandKinematicParams(flexion=sim.LOVE_FLEXION), subject.hand_model)
    if a["pose_noise_mm"]:
        rng = np.random.default_rng(cfg["seed"])
        joints = joints + rng.normal(0.0, float(a["pose_noise_mm"]), joints.shape)
    threshold = posemod.DEFAULT_THRESHOLD if a["threshold"] is None else float(a["threshold"])
    tpl = posemod.ActivationTemplate.from_pose(template_pose, threshold)
    sims = posemod.similarities(joints, tpl)
    det = posemod.ActivationDetector(tpl, debounce=int(a["debounce"]))
    events = [ev for k, s in enumerate(sims) if (ev := det.update_similarity(s, int(ts[k]))) is not None]
    _write_csv(out / "similarity.csv", ["timestamp_us", "similarity"], [[int(t), repr(float(s))] for t, s in zip(ts, sims)])
    _write_csv(out / "events.csv", ["frame", "timestamp_us", "similarity"],
               [[e.frame, e.timestamp_us, repr(e.similarity)] for e in events])
    written = [out / "similarity.csv", out / "events.csv"]
    if intervals is not None:
        p, r = posemod.event_scores(events, intervals)
        _write_csv(out / "scores.csv", ["n_events", "n_intervals", "precision", "recall"],
                   [[len(events), len(intervals), repr(p), repr(r)]])
        written.append(out / "scores.csv")
    return written


HANDLERS = {"simulate": cmd_simulate, "preprocess": cmd_preprocess, "train": cmd_train,
            "eval": cmd_eval, "activate": cmd_activate}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="echo-sonar", description="Acoustic FMCW hand tracking toolkit.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config value (repeatable)")
    ap.add_argument("--augment", type=int, default=None, help="preprocess: number of range shifts (0-6)")
    ap.add_argument("--no-curriculum", action="store_true", help="train: pooled plain training")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.augment is not None:
        overrides.append(f"preprocess.augment={args.augment}")
    if args.no_curriculum:
        overrides.append("train.curriculum=false")
    try:
        cfg = load_config(args.config, overrides, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        formats.atomic_write(out / "resolved_config.yaml", dump_config(cfg).encode("utf-8"))
        written = HANDLERS[args.command](cfg, out)
    except (EchoSonarError, ValueError, OSError) as exc:
        print(f"echo-sonar {args.command}: error: {exc}", file=sys.stderr)
        return 1
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
