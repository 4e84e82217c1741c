import logging

from ltplab.api.arguments import CommandParser
from ltplab.api.endpoints import bench, data, evaluate, robust, train

logger = logging.getLogger("ltplab.router")


def build_parser() -> CommandParser:
    parser = CommandParser(prog="ltplab", description="Learned token pruning experiments")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=CommandParser)

    for endpoint in (data, train, evaluate, robust, bench):
        endpoint.register(subparsers)

    logger.debug("Commands registered (gen, stats, train, eval, robust, bench)")
    return parser
