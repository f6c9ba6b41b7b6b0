"""Binary trajectory dataset format.

Layout: one JSON header line, then length-prefixed records per step.
Record payload = observation (row-major float32) + optional action
(two uint16) + terminal flag byte. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np


@dataclass
class Dataset:
    header: dict
    episodes: list  # list of episodes; episode = list of (obs, action|None, terminal)

    @property
    def include_actions(self):
        return bool(self.header["include_actions"])

    @property
    def n_episodes(self):
        return len(self.episodes)

    def n_records(self):
        return sum(len(ep) for ep in self.episodes)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(json.dumps(self.header, sort_keys=True).encode() + b"\n")
            for ep in self.episodes:
                for obs, action, terminal in ep:
                    payload = np.ascontiguousarray(obs, dtype="<f4").tobytes()
                    if self.include_actions:
                        payload += struct.pack("<HH", int(action[0]), int(action[1]))
                    payload += b"\x01" if terminal else b"\x00"
                    fh.write(struct.pack("<I", len(payload)))
                    fh.write(payload)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            cfg = header["config"]
            h = cfg["rows"] * cfg["pixels_per_face"]
            w = cfg["cols"] * cfg["pixels_per_face"]
            obs_bytes = h * w * 2 * 4
            include_actions = bool(header["include_actions"])
            episodes = []
            current = []
            while True:
                raw_len = fh.read(4)
                if not raw_len:
                    break
                (length,) = struct.unpack("<I", raw_len)
                payload = fh.read(length)
                if len(payload) != length:
                    raise ValueError("truncated dataset record")
                obs = np.frombuffer(payload[:obs_bytes], dtype="<f4").reshape(h, w, 2)
                pos = obs_bytes
                action = None
                if include_actions:
                    action = struct.unpack("<HH", payload[pos:pos + 4])
                    pos += 4
                terminal = payload[pos] == 1
                current.append((obs.astype(np.float64), action, terminal))
                if terminal:
                    episodes.append(current)
                    current = []
            if current:
                episodes.append(current)
        return cls(header=header, episodes=episodes)

    # -- views ----------------------------------------------------------

    def state_action_pairs(self):
        """All (obs, flat_action_index) pairs; requires an actioned dataset."""
        if not self.include_actions:
            raise ValueError("dataset was collected without actions")
        cfg = self.header["config"]
        w = cfg["cols"] * cfg["pixels_per_face"]
        pairs = []
        for ep in self.episodes:
            for obs, action, _ in ep:
                pairs.append((obs, action[0] * w + action[1]))
        return pairs

    def state_pairs(self):
        """All consecutive (s, s') pairs within episodes; actions are ignored."""
        import warnings

        pairs = []
        for ep in self.episodes:
            if len(ep) < 2:
                warnings.warn("episode with fewer than 2 states yields no pairs")
                continue
            for t in range(len(ep) - 1):
                pairs.append((ep[t][0], ep[t + 1][0]))
        return pairs
