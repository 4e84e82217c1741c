import logging
import time
from pathlib import Path

from ltplab.controllers.datagen import DatasetBuilder, length_stats
from ltplab.core.run_config import RunConfig
from ltplab.utils.file_utils import ensure_dir, load_dataset, save_dataset, write_json

logger = logging.getLogger("ltplab.data")


class DataService:
    def generate(self, cfg: RunConfig, run_id: str = None) -> dict:
        """Writes train/eval JSONL splits and their length statistics."""
        start_time = time.time()
        out_dir = ensure_dir(Path(cfg.output_dir) / "data")
        logger.info(
            f"[{run_id}] Start generation | train={cfg.data.train_size} "
            f"| eval={cfg.data.eval_size} | seed={cfg.task.seed}"
        )

        try:
            builder = DatasetBuilder(cfg.task, cfg.data.train_size, cfg.data.eval_size,
                                     cfg.data.eval_seed_offset)
            stats = builder.process()

            train_path = save_dataset(out_dir / "train.jsonl", builder.train)
            eval_path = save_dataset(out_dir / "eval.jsonl", builder.evaluation)
            stats_path = write_json(out_dir / "stats.json", stats)

            duration = round(time.time() - start_time, 2)
            logger.info(f"Generation completed | kl={stats['eval']['kl']:.6f} | duration={duration}s")
            return {
                "train": str(train_path),
                "eval": str(eval_path),
                "stats": str(stats_path),
                "quartiles": {k: stats["eval"][k] for k in ("q1", "q2", "q3")},
                "kl_eval_train": stats["eval"]["kl"],
            }

        except Exception as e:
            duration = round(time.time() - start_time, 2)
            logger.error(f"Generation failed | duration={duration}s | error={str(e)}")
            raise

    def stats(self, dataset: str | Path, reference: str | Path | None = None, bins: int = 20) -> dict:
        lengths = [e.length for e in load_dataset(dataset)]
        ref_lengths = [e.length for e in load_dataset(reference)] if reference else None
        result = length_stats(lengths, bins=bins, reference=ref_lengths).to_dict()
        logger.info(f"Stats computed | dataset={dataset} | q2={result['q2']} | kl={result['kl']}")
        return result
