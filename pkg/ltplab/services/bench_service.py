import logging
import time
from pathlib import Path

from ltplab.controllers.bench import BenchConfig, BenchController
from ltplab.utils.file_utils import ensure_dir

logger = logging.getLogger("ltplab.bench")


class BenchService:
    def run(self, cfg: BenchConfig, out_dir: str | Path, run_id: str = None) -> dict:
        start_time = time.time()
        logger.info(
            f"[{run_id}] Start benchmark | lengths={cfg.lengths} | ratios={cfg.ratios} "
            f"| repetitions={cfg.repetitions}"
        )

        try:
            controller = BenchController(cfg)
            result = controller.process()
            out_dir = ensure_dir(out_dir)
            csv_path = out_dir / "bench.csv"
            json_path = out_dir / "bench.json"
            csv_path.write_text(controller.report("csv"), encoding="utf-8")
            json_path.write_text(controller.report("json"), encoding="utf-8")

            slowdowns = {
                f"n={cell.length},r={cell.ratio:g}": round(cell.slowdown, 2) for cell in result.cells
            }
            for warning in result.warnings:
                logger.warning(f"[{run_id}] {warning}")

            duration = round(time.time() - start_time, 2)
            logger.info(
                f"[{run_id}] Benchmark completed | cells={len(result.cells)} "
                f"| sets_match={result.all_match} | duration={duration}s"
            )
            return {
                "bench_csv": str(csv_path),
                "bench_json": str(json_path),
                "all_match": result.all_match,
                "timer_resolution_ns": result.timer_resolution_ns,
                "slowdowns": slowdowns,
                "warnings": result.warnings,
            }

        except Exception as e:
            duration = round(time.time() - start_time, 2)
            logger.error(f"[{run_id}] Benchmark failed | duration={duration}s | error={str(e)}")
            raise
