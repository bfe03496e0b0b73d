import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

logger = logging.getLogger(__name__)


def render_json(data: Any) -> str:
    """Deterministic JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True, default=str, ensure_ascii=False) + "\n"


def render_csv(rows: Sequence[Dict[str, Any]], columns: Optional[List[str]] = None) -> str:
    frame = pd.DataFrame(list(rows), columns=columns)
    if columns is None:
        frame = frame.reindex(sorted(frame.columns), axis=1)
    return frame.to_csv(index=False, lineterminator="\n")


def render(data: Any, fmt: str, table_key: str = 'rows', columns: Optional[List[str]] = None) -> str:
    """JSON renders the whole document; CSV renders the table stored under table_key (or a bare row list)."""
    if fmt == 'json':
        return render_json(data)
    if fmt == 'csv':
        rows = data if isinstance(data, list) else data.get(table_key, [])
        return render_csv(rows, columns)
    raise ValueError(f"unknown output format '{fmt}', expected json or csv")


class ResultReportGenerator:
    """Writes result documents into one output directory."""

    def __init__(self, output_dir: str = "results"):
        self.output_dir = output_dir
        os.makedirs(self.output_dir, exist_ok=True)

    def write(self, name: str, data: Any, fmt: str = 'json', table_key: str = 'rows',
              columns: Optional[List[str]] = None) -> str:
        filename = os.path.join(self.output_dir, f"{name}.{fmt}")
        with open(filename, 'w', encoding='utf-8', newline='') as f:
            f.write(render(data, fmt, table_key, columns))
        logger.info(f"Wrote {filename}")
        return filename

    def write_both(self, name: str, data: Dict[str, Any], table_key: str = 'rows',
                   columns: Optional[List[str]] = None) -> List[str]:
        return [self.write(name, data, 'json'), self.write(name, data, 'csv', table_key, columns)]

    def summary(self, sections: Dict[str, Any]) -> str:
        """Plain-text overview, one line per section."""
        lines = ["p-adic character average pipeline", "=" * 40]
        for key in sorted(sections):
            lines.append(f"{key}: {sections[key]}")
        text = "\n".join(lines) + "\n"
        filename = os.path.join(self.output_dir, "summary.txt")
        with open(filename, 'w', encoding='utf-8') as f:
            f.write(text)
        logger.info(f"Wrote {filename}")
        return filename
