"""Stage orchestration: synth -> ingest -> cohort -> featurize -> encode
-> train -> evaluate -> report, plus the optional LVLM evaluation.

Each stage hashes its config slice and its predecessor's outputs. A
rerun with unchanged inputs is a no-op ("up to date"); a predecessor
whose outputs changed on disk since they were recorded raises StaleInput
rather than silently consuming drifted data. provenance.json holds only
hashes, never wall-clock times, so identical runs leave identical trees.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, StaleInput, ExternalFailure
from .tables import parse_table, read_csv, write_csv
from . import ingest as ingest_mod
from .cohort import apply_cohort, label_stays, LabeledStay, GroupLabels
from .structured import (
    VariableRangeTable,
    StructuredConfig,
    compute_train_stats,
    featurize_stay,
    TrainStats,
)
from .manifests import (
    EmbeddingManifest,
    encode_reference_manifest,
    run_external_encoder,
    read_manifest,
    write_manifest,
)
from .fusion import (
    assemble_fused,
    split_80_20,
    split_by_patient,
    train_logreg,
    predict_proba,
    LogRegModel,
    save_feature_map,
)
from .metrics import (
    auroc,
    auprc,
    bootstrap_ci,
    classification_metrics,
    subgroup_performance,
    fairness_report,
    linear_shap,
    modality_importance,
    roc_points,
    pr_points,
    UndefinedMetric,
)
from .lvlm import render_prompt, run_instances, score_lvlm
from .synth import generate, source_schemas
from .config import RunConfig, config_hash, section_hash

SOURCE_TABLES = ("patients", "admissions", "icustays", "vitals", "notes", "images")

STAGE_ORDER = ("synth", "ingest", "cohort", "featurize", "encode", "train", "evaluate", "report")


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def tree_sha256(root: Path) -> str:
    """A single digest over a directory: sorted (relative name, sha) pairs."""
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(b":")
            h.update(file_sha256(p).encode())
            h.update(b"\n")
    return "sha256:" + h.hexdigest()


@dataclass
class StageResult:
    name: str
    status: str  # ran | up to date
    detail: str = ""


class Pipeline:
    def __init__(self, config: RunConfig):
        self.config = config
        self.input_dir = Path(config.input_dir)
        self.work_dir = Path(config.work_dir)
        self.work_dir.mkdir(parents=True, exist_ok=True)
        self.provenance_path = self.work_dir / "provenance.json"

    # ----- provenance -----

    def _load_provenance(self) -> dict:
        if self.provenance_path.exists():
            return json.loads(self.provenance_path.read_text(encoding="utf-8"))
        return {"config_hash": config_hash(self.config), "stages": {}}

    def _save_provenance(self, prov: dict) -> None:
        prov["config_hash"] = config_hash(self.config)
        self.provenance_path.write_text(
            json.dumps(prov, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )

    def _hash_outputs(self, paths: dict[str, Path]) -> dict[str, str]:
        out = {}
        for key, p in paths.items():
            if p.is_dir():
                out[key] = tree_sha256(p)
            elif p.exists():
                out[key] = file_sha256(p)
            else:
                raise DataError(f"expected output missing: {p}")
        return out

    def _verify_recorded(self, prov: dict, stage: str) -> dict[str, str]:
        """Check a predecessor's recorded outputs still match the disk."""
        rec = prov["stages"].get(stage)
        if rec is None:
            raise DataError(f"stage '{stage}' has not run yet; run it first")
        for key, recorded in rec["outputs"].items():
            p = self.work_dir / key if not key.startswith("input:") else self.input_dir / key[6:]
            current = (
                tree_sha256(p) if p.is_dir() else file_sha256(p) if p.exists() else None
            )
            if current != recorded:
                raise StaleInput(
                    f"output '{key}' of stage '{stage}' changed since it was recorded; "
                    f"rerun '{stage}'"
                )
        return rec["outputs"]

    def _run_protocol(self, name: str, inputs: dict[str, str], impl, output_paths) -> StageResult:
        prov = self._load_provenance()
        rec = prov["stages"].get(name)
        if rec is not None and rec["inputs"] == inputs:
            try:
                self._verify_recorded(prov, name)
                return StageResult(name, "up to date")
            except (StaleInput, DataError):
                pass  # outputs tampered or missing: recompute
        impl()
        prov = self._load_provenance()
        prov["stages"][name] = {
            "inputs": inputs,
            "outputs": self._hash_outputs(output_paths()),
        }
        self._save_provenance(prov)
        return StageResult(name, "ran")

    # ----- stage input signatures -----

    def _source_files(self) -> dict[str, Path]:
        return {f"input:{t}.csv": self.input_dir / f"{t}.csv" for t in SOURCE_TABLES}

    def _hash_sources(self) -> dict[str, str]:
        hashes = {}
        for key, p in self._source_files().items():
            if not p.exists():
                raise DataError(f"source table missing: {p}")
            hashes[key] = file_sha256(p)
        ranges = self.input_dir / "ranges.csv"
        if ranges.exists():
            hashes["input:ranges.csv"] = file_sha256(ranges)
        return hashes

    # ----- stages -----

    def run_synth(self) -> StageResult:
        if self.config.synth is None:
            raise DataError("config has no synth section")
        inputs = {"config": section_hash(self.config, "synth", "input_dir")}

        def impl():
            generate(self.config.synth, self.input_dir)

        def outputs():
            paths = {f"input:{t}.csv": self.input_dir / f"{t}.csv" for t in SOURCE_TABLES}
            paths["input:ranges.csv"] = self.input_dir / "ranges.csv"
            paths["input:synth_truth.json"] = self.input_dir / "synth_truth.json"
            paths["input:images"] = self.input_dir / "images"
            return paths

        return self._run_protocol("synth", inputs, impl, outputs)

    def run_ingest(self) -> StageResult:
        inputs = dict(self._hash_sources())
        master_dir = self.work_dir / "master"

        def impl():
            schemas = source_schemas()
            tables = {
                t: parse_table(self.input_dir / f"{t}.csv", schemas[t])
                for t in SOURCE_TABLES
            }
            linked = ingest_mod.link_stays(
                tables["patients"], tables["admissions"], tables["icustays"]
            )
            stays = [k for k, _, _ in linked.stays]
            vit = ingest_mod.attach_events(stays, tables["vitals"], "vital")
            nts = ingest_mod.attach_events(stays, tables["notes"], "note")
            img = ingest_mod.attach_events(stays, tables["images"], "image")
            master = ingest_mod.build_master(linked, vitals=vit, notes=nts, images=img)
            ingest_mod.write_master(master, master_dir)
            report = ingest_mod.ingest_report(
                linked,
                {
                    "vital": len(tables["vitals"].rows),
                    "note": len(tables["notes"].rows),
                    "image": len(tables["images"].rows),
                },
                {"vital": vit, "note": nts, "image": img},
            )
            ingest_mod.save_report(report, master_dir / "ingest_report.json")

        def outputs():
            return {"master": master_dir}

        return self._run_protocol("ingest", inputs, impl, outputs)

    def run_cohort(self) -> StageResult:
        prov = self._load_provenance()
        pred = self._verify_recorded(prov, "ingest")
        inputs = {"config": section_hash(self.config, "cohort", "task", "split_by", "split_seed", "train_fraction")}
        inputs.update({f"ingest/{k}": v for k, v in pred.items()})
        cohort_dir = self.work_dir / "cohort"

        def impl():
            master = ingest_mod.read_master(self.work_dir / "master")
            result = apply_cohort(master, self.config.cohort)
            labeled = label_stays(result.cohort, self.config.cohort)
            clipped = ingest_mod.MasterDataset([ls.stay for ls in labeled])
            ingest_mod.write_master(clipped, cohort_dir / "master")
            rows = [
                [
                    ls.stay_id,
                    ls.stay.key.subject_id,
                    ls.mortality_label,
                    ls.los_label,
                    ls.groups.gender,
                    ls.groups.race,
                    ls.groups.age_band,
                ]
                for ls in labeled
            ]
            write_csv(
                cohort_dir / "labels.csv",
                ["stay_id", "subject_id", "mortality", "los", "gender", "race", "age_band"],
                rows,
            )
            (cohort_dir / "cohort_report.json").write_text(
                json.dumps(result.report(), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
            ids = [ls.stay_id for ls in labeled]
            if self.config.split_by == "patient":
                subj = {ls.stay_id: ls.stay.key.subject_id for ls in labeled}
                train, test = split_by_patient(
                    ids, subj, self.config.split_seed, self.config.train_fraction
                )
            else:
                train, test = split_80_20(
                    ids, self.config.split_seed, self.config.train_fraction
                )
            (cohort_dir / "split.json").write_text(
                json.dumps(
                    {
                        "by": self.config.split_by,
                        "seed": self.config.split_seed,
                        "train_fraction": self.config.train_fraction,
                        "train_ids": train,
                        "test_ids": test,
                    },
                    indent=2,
                    sort_keys=True,
                )
                + "\n",
                encoding="utf-8",
            )

        def outputs():
            return {
                "cohort/master": cohort_dir / "master",
                "cohort/labels.csv": cohort_dir / "labels.csv",
                "cohort/cohort_report.json": cohort_dir / "cohort_report.json",
                "cohort/split.json": cohort_dir / "split.json",
            }

        return self._run_protocol("cohort", inputs, impl, outputs)

    def _load_labeled(self) -> list[LabeledStay]:
        clipped = ingest_mod.read_master(self.work_dir / "cohort" / "master")
        by_id = clipped.by_id()
        _, rows = read_csv(self.work_dir / "cohort" / "labels.csv")
        labeled = []
        for stay_id, _subject, mort, los, gender, race, band in rows:
            labeled.append(
                LabeledStay(
                    stay=by_id[int(stay_id)],
                    mortality_label=int(mort),
                    los_label=int(los),
                    groups=GroupLabels(gender=gender, race=race, age_band=band),
                )
            )
        labeled.sort(key=lambda ls: ls.stay_id)
        return labeled

    def _load_split(self) -> tuple[list[int], list[int]]:
        split = json.loads(
            (self.work_dir / "cohort" / "split.json").read_text(encoding="utf-8")
        )
        return split["train_ids"], split["test_ids"]

    def _ranges(self) -> VariableRangeTable:
        path = self.input_dir / "ranges.csv"
        return VariableRangeTable.load(path) if path.exists() else VariableRangeTable.default()

    def run_featurize(self) -> StageResult:
        prov = self._load_provenance()
        pred = self._verify_recorded(prov, "cohort")
        inputs = {"config": section_hash(self.config, "featurizer")}
        inputs.update({f"cohort/{k}": v for k, v in pred.items()})
        ranges_path = self.input_dir / "ranges.csv"
        if ranges_path.exists():
            inputs["input:ranges.csv"] = file_sha256(ranges_path)
        feat_dir = self.work_dir / "features"

        def impl():
            feat_dir.mkdir(parents=True, exist_ok=True)
            labeled = self._load_labeled()
            train_ids, _ = self._load_split()
            train_set = set(train_ids)
            ranges = self._ranges()
            stats = compute_train_stats(
                [ls.stay for ls in labeled if ls.stay_id in train_set],
                variables=self.config.featurizer.variables,
                ranges=ranges,
                provenance={
                    "split_seed": self.config.split_seed,
                    "split_by": self.config.split_by,
                    "n_train": len(train_ids),
                },
            )
            stats.save(feat_dir / "featurizer_state.json")
            vecs = np.stack(
                [
                    featurize_stay(ls.stay, stats, self.config.featurizer, ranges)
                    for ls in labeled
                ]
            )
            np.save(feat_dir / "vectors.npy", vecs)
            write_csv(
                feat_dir / "ids.csv", ["stay_id"], [[ls.stay_id] for ls in labeled]
            )

        def outputs():
            return {
                "features/featurizer_state.json": feat_dir / "featurizer_state.json",
                "features/vectors.npy": feat_dir / "vectors.npy",
                "features/ids.csv": feat_dir / "ids.csv",
            }

        return self._run_protocol("featurize", inputs, impl, outputs)

    def run_encode(self) -> StageResult:
        prov = self._load_provenance()
        pred = self._verify_recorded(prov, "cohort")
        inputs = {"config": section_hash(self.config, "encoders", "cohort")}
        inputs.update({f"cohort/{k}": v for k, v in pred.items()})
        man_root = self.work_dir / "manifests"

        def impl():
            labeled = self._load_labeled()
            stays = [ls.stay for ls in labeled]
            ids = [ls.stay_id for ls in labeled]
            for spec in self.config.encoders:
                out = man_root / spec.name
                if spec.kind == "native":
                    manifest = encode_reference_manifest(
                        stays, spec.modality, spec.dimension, spec.seed, spec.name
                    )
                    write_manifest(manifest, out)
                else:
                    run_external_encoder(
                        spec,
                        self.work_dir / "master",
                        out,
                        self.config.cohort.window_hours,
                        expected_ids=ids,
                    )

        def outputs():
            return {
                f"manifests/{spec.name}": man_root / spec.name
                for spec in self.config.encoders
            }

        if not self.config.encoders:
            # nothing to encode: record an empty stage so train can proceed
            return self._run_protocol("encode", inputs, lambda: None, lambda: {})
        return self._run_protocol("encode", inputs, impl, outputs)

    def _load_manifests(self) -> list[EmbeddingManifest]:
        return [
            read_manifest(self.work_dir / "manifests" / spec.name)
            for spec in self.config.encoders
        ]

    def _assemble(self):
        labeled = self._load_labeled()
        vecs = np.load(self.work_dir / "features" / "vectors.npy")
        _, id_rows = read_csv(self.work_dir / "features" / "ids.csv")
        structured = {int(r[0]): vecs[i] for i, r in enumerate(id_rows)}
        manifests = self._load_manifests()
        # expected block dimensions, keyed the way assemble_fused names blocks
        modality_counts = {}
        for spec in self.config.encoders:
            modality_counts[spec.modality] = modality_counts.get(spec.modality, 0) + 1
        expected = {}
        for spec in self.config.encoders:
            name = (
                spec.modality
                if modality_counts[spec.modality] == 1
                else f"{spec.modality}:{spec.name}"
            )
            expected[name] = spec.dimension
        if not self.config.featurizer.include_demographics:
            # with demographics the block width depends on training vocab
            expected["structured"] = self.config.featurizer.grid_dim()
        fused = assemble_fused(
            labeled,
            structured,
            manifests,
            task=self.config.task,
            expected_dims=expected,
        )
        return fused

    def run_train(self) -> StageResult:
        prov = self._load_provenance()
        inputs = {"config": section_hash(self.config, "l2", "max_iter", "tol", "task")}
        for stage in ("featurize", "encode"):
            rec = self._verify_recorded(prov, stage)
            inputs.update({f"{stage}/{k}": v for k, v in rec.items()})
        model_dir = self.work_dir / "model"

        def impl():
            model_dir.mkdir(parents=True, exist_ok=True)
            fused = self._assemble()
            train_ids, _ = self._load_split()
            train_set = set(train_ids)
            idx = np.array([i for i, sid in enumerate(fused.stay_ids) if sid in train_set])
            train = fused.subset(idx)
            model = train_logreg(
                train.X,
                train.y,
                l2=self.config.l2,
                max_iter=self.config.max_iter,
                tol=self.config.tol,
                seed=self.config.split_seed,
            )
            model.metadata["task"] = self.config.task
            model.metadata["split_by"] = self.config.split_by
            model.metadata["feature_dim"] = fused.dim
            model.save(model_dir / "model.json")
            save_feature_map(fused.feature_map, model_dir / "feature_map.json")

        def outputs():
            return {
                "model/model.json": model_dir / "model.json",
                "model/feature_map.json": model_dir / "feature_map.json",
            }

        return self._run_protocol("train", inputs, impl, outputs)

    def run_evaluate(self) -> StageResult:
        prov = self._load_provenance()
        inputs = {
            "config": section_hash(
                self.config, "n_boot", "eval_seed", "threshold", "fairness_attributes", "task"
            )
        }
        for stage in ("featurize", "encode", "train"):
            rec = self._verify_recorded(prov, stage)
            inputs.update({f"{stage}/{k}": v for k, v in rec.items()})
        eval_dir = self.work_dir / "eval"

        def impl():
            eval_dir.mkdir(parents=True, exist_ok=True)
            fused = self._assemble()
            train_ids, test_ids = self._load_split()
            train_set, test_set = set(train_ids), set(test_ids)
            tr_idx = np.array([i for i, s in enumerate(fused.stay_ids) if s in train_set])
            te_idx = np.array([i for i, s in enumerate(fused.stay_ids) if s in test_set])
            train, test = fused.subset(tr_idx), fused.subset(te_idx)
            model = LogRegModel.load(self.work_dir / "model" / "model.json")
            p = predict_proba(model, test.X)
            y_hat = (p >= self.config.threshold).astype(int)

            metrics = {}
            for name, fn in (("auroc", auroc), ("auprc", auprc)):
                try:
                    metrics[name] = bootstrap_ci(
                        fn,
                        test.y,
                        p,
                        n_boot=self.config.n_boot,
                        seed=self.config.eval_seed,
                        name=name,
                    ).to_dict()
                except UndefinedMetric as exc:
                    metrics[name] = {"name": name, "point": None, "note": str(exc)}

            subgroups = {}
            fairness = {}
            for attr in self.config.fairness_attributes:
                labels = [getattr(g, attr) for g in test.groups]
                subgroups[attr] = subgroup_performance(test.y, p, y_hat, labels)
                fairness[attr] = fairness_report(test.y, p, y_hat, labels, attr).to_dict()

            mu = train.X.mean(axis=0)
            phi = linear_shap(model.weights, test.X, mu)
            importance = {
                "shap": modality_importance(fused.feature_map, phi=phi),
                "coefficients": modality_importance(
                    fused.feature_map, weights=model.weights
                ),
            }
            shap_additivity_err = float(
                np.max(
                    np.abs(
                        phi.sum(axis=1) - (test.X @ model.weights - mu @ model.weights)
                    )
                )
            ) if len(te_idx) else 0.0

            report = {
                "task": self.config.task,
                "threshold": self.config.threshold,
                "n_train": len(tr_idx),
                "n_test": len(te_idx),
                "metrics": metrics,
                "classification": classification_metrics(test.y, y_hat),
                "subgroups": subgroups,
                "fairness": fairness,
                "modality_importance": importance,
                "shap_additivity_max_err": shap_additivity_err,
                "model": {
                    "converged": model.metadata.get("converged"),
                    "iterations": model.metadata.get("iterations"),
                    "l2": model.metadata.get("l2"),
                    "dim": model.metadata.get("dim"),
                },
                "split": {
                    "by": self.config.split_by,
                    "seed": self.config.split_seed,
                    "train_fraction": self.config.train_fraction,
                },
                "config_hash": config_hash(self.config),
            }
            (eval_dir / "eval_report.json").write_text(
                json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
            try:
                roc = roc_points(test.y, p)
                pr = pr_points(test.y, p)
            except UndefinedMetric:
                roc, pr = [], []
            write_csv(
                eval_dir / "roc_points.csv",
                ["fpr", "tpr", "threshold"],
                [[repr(a), repr(b), repr(c)] for a, b, c in roc],
            )
            write_csv(
                eval_dir / "pr_points.csv",
                ["recall", "precision", "threshold"],
                [[repr(a), repr(b), repr(c)] for a, b, c in pr],
            )

        def outputs():
            return {
                "eval/eval_report.json": eval_dir / "eval_report.json",
                "eval/roc_points.csv": eval_dir / "roc_points.csv",
                "eval/pr_points.csv": eval_dir / "pr_points.csv",
            }

        return self._run_protocol("evaluate", inputs, impl, outputs)

    def run_report(self) -> StageResult:
        prov = self._load_provenance()
        rec = self._verify_recorded(prov, "evaluate")
        inputs = {f"evaluate/{k}": v for k, v in rec.items()}
        report_dir = self.work_dir / "report"

        def impl():
            report_dir.mkdir(parents=True, exist_ok=True)
            report = json.loads(
                (self.work_dir / "eval" / "eval_report.json").read_text(encoding="utf-8")
            )
            lines = [
                f"task: {report['task']}",
                f"train/test: {report['n_train']}/{report['n_test']}",
                f"threshold: {report['threshold']}",
                "",
            ]
            metric_rows = []
            for name in ("auroc", "auprc"):
                m = report["metrics"][name]
                if m.get("point") is None:
                    lines.append(f"{name}: undefined ({m.get('note', '')})")
                    continue
                lines.append(
                    f"{name}: {m['point']:.4f} "
                    f"[{m['ci_low']:.4f}, {m['ci_high']:.4f}] "
                    f"({m['n_boot']} resamples)"
                )
                metric_rows.append(
                    [name, repr(m["point"]), repr(m["ci_low"]), repr(m["ci_high"])]
                )
            for name, val in report["classification"].items():
                shown = "undefined" if val is None else f"{val:.4f}"
                lines.append(f"{name}: {shown}")
                metric_rows.append([name, "" if val is None else repr(val), "", ""])
            lines.append("")
            fairness_rows = []
            for attr, rep in sorted(report["fairness"].items()):
                dp = rep["demographic_parity"]
                eo = rep["equalized_odds"]
                lines.append(
                    f"fairness[{attr}]: demographic_parity="
                    f"{'undefined' if dp is None else format(dp, '.4f')} "
                    f"equalized_odds={'undefined' if eo is None else format(eo, '.4f')}"
                )
                fairness_rows.append(
                    [attr, "" if dp is None else repr(dp), "" if eo is None else repr(eo)]
                )
            lines.append("")
            importance_rows = []
            for variant in ("shap", "coefficients"):
                shares = report["modality_importance"][variant]
                for block, share in sorted(shares.items()):
                    importance_rows.append([variant, block, repr(share)])
                rendered = ", ".join(
                    f"{b}={s:.4f}" for b, s in sorted(shares.items())
                )
                lines.append(f"importance[{variant}]: {rendered}")
            (report_dir / "summary.txt").write_text(
                "\n".join(lines) + "\n", encoding="utf-8"
            )
            write_csv(
                report_dir / "metrics.csv",
                ["metric", "point", "ci_low", "ci_high"],
                metric_rows,
            )
            write_csv(
                report_dir / "fairness.csv",
                ["attribute", "demographic_parity", "equalized_odds"],
                fairness_rows,
            )
            write_csv(
                report_dir / "importance.csv",
                ["variant", "block", "share"],
                importance_rows,
            )

        def outputs():
            return {
                "report/summary.txt": report_dir / "summary.txt",
                "report/metrics.csv": report_dir / "metrics.csv",
                "report/fairness.csv": report_dir / "fairness.csv",
                "report/importance.csv": report_dir / "importance.csv",
            }

        return self._run_protocol("report", inputs, impl, outputs)

    def run_lvlm_eval(self) -> StageResult:
        if self.config.lvlm is None:
            raise DataError("config has no lvlm.base_url")
        prov = self._load_provenance()
        rec = self._verify_recorded(prov, "cohort")
        inputs = {"config": section_hash(self.config, "task", "lvlm_max_instances")}
        inputs.update({f"cohort/{k}": v for k, v in rec.items()})
        lvlm_dir = self.work_dir / "lvlm"

        def impl():
            lvlm_dir.mkdir(parents=True, exist_ok=True)
            labeled = self._load_labeled()
            _, test_ids = self._load_split()
            test_set = set(test_ids)
            chosen = [ls for ls in labeled if ls.stay_id in test_set]
            chosen = chosen[: self.config.lvlm_max_instances]
            instances = [
                render_prompt(ls, self.config.task, self.config.lvlm.max_images)
                for ls in chosen
            ]
            for inst in instances:
                inst.image_refs = [str(self.input_dir / p) for p in inst.image_refs]
            answers = run_instances(instances, self.config.lvlm, lvlm_dir / "lvlm_log.jsonl")
            report = score_lvlm(
                answers,
                [inst.ground_truth for inst in instances],
                self.config.lvlm.refusal_policy,
            )
            report["task"] = self.config.task
            report["endpoint"] = {
                "base_url": self.config.lvlm.base_url,
                "model": self.config.lvlm.model,
            }
            (lvlm_dir / "lvlm_report.json").write_text(
                json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )

        def outputs():
            return {"lvlm/lvlm_report.json": lvlm_dir / "lvlm_report.json"}

        return self._run_protocol("lvlm_eval", inputs, impl, outputs)

    def run_all(self) -> list[StageResult]:
        results = []
        if self.config.synth is not None:
            results.append(self.run_synth())
        results.append(self.run_ingest())
        results.append(self.run_cohort())
        results.append(self.run_featurize())
        results.append(self.run_encode())
        results.append(self.run_train())
        results.append(self.run_evaluate())
        results.append(self.run_report())
        if self.config.lvlm is not None:
            results.append(self.run_lvlm_eval())
        return results
