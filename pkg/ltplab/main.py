import logging
import sys
import time
import uuid

from ltplab.api.router import build_parser
from ltplab.controllers.error_validator import ErrorValidator
from ltplab.controllers.generate_json import JSONResponse
from ltplab.core.config import settings
from ltplab.core.errors import ConfigError, UsageError
from ltplab.core.logging_config import setup_logging

logger = logging.getLogger("ltplab.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def main(argv=None) -> int:
    setup_logging(settings.LOG_LEVEL, settings.LOG_DIR)
    run_id = str(uuid.uuid4())
    validator = ErrorValidator()

    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        logger.error(f"[{run_id}] Usage error: {str(e)}")
        print(validator.error(str(e)), file=sys.stderr)
        return EXIT_USAGE

    start_time = time.time()
    logger.info(f"[{run_id}] START {args.command}")

    try:
        payload, warnings = args.handler(args, run_id)

    except (UsageError, ConfigError) as e:
        duration = round(time.time() - start_time, 2)
        logger.error(f"[{run_id}] ERROR {args.command} time={duration}s error={str(e)}")
        print(validator.error(str(e)), file=sys.stderr)
        return EXIT_USAGE

    except Exception as e:
        duration = round(time.time() - start_time, 2)
        logger.error(
            f"[{run_id}] ERROR {args.command} time={duration}s "
            f"type={type(e).__name__} error={str(e)}"
        )
        print(validator.error(str(e)), file=sys.stderr)
        return EXIT_RUNTIME

    for warning in warnings:
        logger.warning(f"[{run_id}] {warning}")
    print(JSONResponse(args.command, payload, warnings).to_json())

    duration = round(time.time() - start_time, 2)
    logger.info(f"[{run_id}] END {args.command} status={EXIT_OK} time={duration}s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
