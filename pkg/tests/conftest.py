from __future__ import annotations

from jpt.backbone import deterministic_mode

deterministic_mode()
