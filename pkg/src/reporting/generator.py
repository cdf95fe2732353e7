"""Report generation module.

This module writes the experiment results: the metric summary table, the per-case
predictions, per-fold JSON logs and the HTML report, optionally converted to PDF.
"""

import json
import logging
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd
from jinja2 import Environment, FileSystemLoader
from natsort import natsorted

from src.data.geometry import measure_mask
from src.utils.config import (
    PREDICTIONS_NAME,
    PUBLISHED_TABLE1,
    REPORT_NAME,
    RESULTS_DIR,
    TABLE1_NAME,
)
from src.utils.exceptions import GeometryError
from src.utils.models import FoldPlan, MethodResult, Sample
from src.version import VERSION
from src.visualization.plots import (
    create_loss_figure,
    create_overlay_figure,
    create_scatter_figure,
    figures_to_html,
)

logger = logging.getLogger(__name__)

TEMPLATE_DIR = Path(__file__).parent / "templates"
TABLE1_ROWS = ["PLE", "R", "Dice", "HD"]
PREDICTION_COLUMNS = [
    "case_id",
    "method",
    "fold",
    "pred_mm",
    "gt_mm",
    "dice",
    "hausdorff_mm",
]
OVERLAY_CASES = 3


def _json_ready(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path: Path, data: Any) -> Path:
    path.write_text(json.dumps(_json_ready(data), indent=2), encoding="utf-8")
    return path


def table1(results: Dict[str, MethodResult]) -> pd.DataFrame:
    """Return the summary table: rows PLE, R, Dice, HD and one column per method.

    Dice and HD are left empty for the regression methods.
    """
    columns = {}
    for method, result in results.items():
        row = result.report.to_row() if result.report else {}
        columns[method] = [row.get(name) for name in TABLE1_ROWS]
    return pd.DataFrame(columns, index=TABLE1_ROWS)


def predictions_table(results: Dict[str, MethodResult]) -> pd.DataFrame:
    """Return every held-out prediction, naturally ordered by method then case."""
    rows = [
        {
            "case_id": p.case_id,
            "method": p.method,
            "fold": p.fold,
            "pred_mm": p.pred_mm,
            "gt_mm": p.gt_mm,
            "dice": p.dice,
            "hausdorff_mm": p.hausdorff_mm,
        }
        for result in results.values()
        for p in result.predictions
    ]
    df = pd.DataFrame(rows, columns=PREDICTION_COLUMNS)
    if df.empty:
        return df
    order = natsorted(range(len(df)), key=lambda i: (df["method"][i], df["case_id"][i]))
    return df.iloc[order].reset_index(drop=True)


def fold_logs(results: Dict[str, MethodResult]) -> List[Dict[str, Any]]:
    """Return one log record per (method, outer fold)."""
    records = []
    for method, result in results.items():
        for fold in sorted(result.chosen_decays):
            records.append(
                {
                    "method": method,
                    "fold": fold,
                    "chosen_weight_decay": result.chosen_decays[fold],
                    "inner_scores": result.inner_scores.get(fold, {}),
                    "loss_curve": result.loss_curves.get(fold, []),
                    "status": result.status,
                }
            )
    return records


def published_context_table() -> pd.DataFrame:
    """Return the published clinical figures, including the inter-observer columns."""
    return pd.DataFrame(PUBLISHED_TABLE1).reindex(TABLE1_ROWS)


class ReportGenerator:
    """Class responsible for writing experiment results and reports.

    Attributes:
        env (Environment): Jinja2 template environment.
        template_dir (str): Directory containing report templates.
    """

    def __init__(self, template_dir: Union[str, Path] = TEMPLATE_DIR):
        """Initialize the ReportGenerator with template directory.

        Args:
            template_dir (Union[str, Path], optional): Directory containing report
                templates. Defaults to the package ``templates`` directory.
        """
        self.env = Environment(
            loader=FileSystemLoader(str(template_dir)), autoescape=False
        )
        self.template_dir = str(template_dir)

    def _overlays(
        self, results: Dict[str, MethodResult], samples: Optional[Sequence[Sample]]
    ) -> List:
        sb = results.get("SB")
        if sb is None or not samples:
            return []
        by_id = {s.case_id: s for s in samples}
        figures = []
        for prediction in sb.predictions:
            if len(figures) == OVERLAY_CASES:
                break
            if prediction.pred_mask is None or prediction.case_id not in by_id:
                continue
            try:
                measurement = measure_mask(prediction.pred_mask)
            except GeometryError:
                continue
            figures.append(
                create_overlay_figure(
                    by_id[prediction.case_id].image,
                    measurement,
                    title=f"Cas {prediction.case_id} (pli {prediction.fold})",
                )
            )
        return figures

    def generate_html_report(
        self,
        results: Dict[str, MethodResult],
        metadata: Dict[str, Any],
        samples: Optional[Sequence[Sample]] = None,
        with_figures: bool = True,
    ) -> str:
        """Generate a HTML report using jinja2 template.

        Args:
            results (Dict[str, MethodResult]): Experiment results by method.
            metadata (Dict[str, Any]): Run provenance shown in the header.
            samples (Optional[Sequence[Sample]]): Dataset, used for the overlays.
            with_figures (bool): Embed the interactive plotly figures.

        Returns:
            str: Generated HTML content.
        """
        template = self.env.get_template("report_template.html")
        predictions = predictions_table(results)
        figures: List[str] = []
        if with_figures and not predictions.empty:
            figures = figures_to_html(
                [create_loss_figure(results), create_scatter_figure(predictions)]
                + self._overlays(results, samples)
            )
        decays = pd.DataFrame(
            {m: pd.Series(r.chosen_decays, dtype=float) for m, r in results.items()}
        )
        decays.index.name = "pli"
        return template.render(
            date=metadata.get("date", datetime.now().strftime("%Y-%m-%d %H:%M")),
            command=metadata.get("command", "crossval"),
            seed=metadata.get("seed", ""),
            grouping=metadata.get("grouping", ""),
            n_cases=metadata.get("n_cases", ""),
            paper_faithful=metadata.get("paper_faithful", False),
            table1=table1(results).to_html(
                classes="table", float_format="{:.3f}".format, na_rep=""
            ),
            decays=decays.to_html(
                classes="table", float_format="{:.0e}".format, na_rep=""
            ),
            context=published_context_table().to_html(
                classes="table context", float_format="{:.2f}".format, na_rep=""
            ),
            partial=[
                {"method": m, "error": r.error}
                for m, r in results.items()
                if r.status != "complete"
            ],
            figures=figures,
            version=VERSION,
        )

    def save_pdf_from_html(self, html_content: str, output_path: Union[str, Path]):
        """Convert the HTML content to a PDF file.

        Args:
            html_content (str): HTML content to convert.
            output_path (Union[str, Path]): Path where to save the PDF file.
        """
        from weasyprint import CSS, HTML

        css_path = Path(self.template_dir) / "styles.css"
        HTML(string=html_content).write_pdf(
            str(output_path), stylesheets=[CSS(str(css_path))]
        )

    def write_results(  # noqa: PLR0913
        self,
        results: Dict[str, MethodResult],
        plan: FoldPlan,
        output_dir: Union[str, Path],
        run_config: Optional[Dict[str, Any]] = None,
        samples: Optional[Sequence[Sample]] = None,
        pdf: bool = False,
    ) -> Dict[str, Path]:
        """Write every result file under ``output_dir/results``.

        Returns:
            Dict[str, Path]: Written files by kind.
        """
        out = Path(output_dir) / RESULTS_DIR
        out.mkdir(parents=True, exist_ok=True)
        written: Dict[str, Path] = {}

        table1(results).to_csv(out / TABLE1_NAME, index_label="metric")
        written["table1"] = out / TABLE1_NAME
        predictions_table(results)[["case_id", "method", "pred_mm", "gt_mm"]].to_csv(
            out / PREDICTIONS_NAME, index=False
        )
        written["predictions"] = out / PREDICTIONS_NAME

        folds_dir = out / "folds"
        folds_dir.mkdir(exist_ok=True)
        for record in fold_logs(results):
            name = f"{record['method']}_fold{record['fold']}.json"
            written[f"fold:{record['method']}:{record['fold']}"] = write_json(
                folds_dir / name, record
            )
        written["fold_plan"] = write_json(out / "fold_plan.json", plan.to_dict())
        written["summary"] = write_json(
            out / "summary.json",
            {
                m: {
                    "status": r.status,
                    "error": r.error,
                    "report": r.report.to_dict() if r.report else None,
                }
                for m, r in results.items()
            },
        )
        metadata = dict(run_config or {})
        written["run_config"] = write_json(out / "run_config.json", metadata)

        metadata.setdefault("seed", plan.seed)
        metadata.setdefault("grouping", plan.grouping)
        metadata.setdefault("n_cases", sum(len(f) for f in plan.outer))
        html = self.generate_html_report(results, metadata, samples)
        (out / REPORT_NAME).write_text(html, encoding="utf-8")
        written["report"] = out / REPORT_NAME
        if pdf:
            pdf_path = out / Path(REPORT_NAME).with_suffix(".pdf").name
            static = self.generate_html_report(
                results, metadata, samples, with_figures=False
            )
            self.save_pdf_from_html(static, pdf_path)
            written["pdf"] = pdf_path
        logger.info("Wrote %d result files to %s", len(written), out)
        return written
