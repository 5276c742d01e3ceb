"""Per-AC throughput, MAC delay and jitter (population variance of delay)."""

from __future__ import annotations

from dataclasses import dataclass, field


def population_variance(samples) -> float:
    """Two-pass population variance; the batch counterpart of the streaming update."""
    n = len(samples)
    if n == 0:
        raise ValueError("no samples")
    mean = sum(samples) / n
    return sum((x - mean) ** 2 for x in samples) / n


@dataclass
class _DelayStats:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    payload_bits: int = 0
    dropped: int = 0
    offered_bits: int = 0
    samples: list = field(default_factory=list)

    def add(self, x: float):
        # Welford
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)


@dataclass(frozen=True)
class ACMetrics:
    ac_id: int | None            # None for the aggregate row
    throughput: float            # delivered airtime / observed time
    offered: float               # arrived airtime / observed time (Poisson sources)
    mean_delay_us: float | None  # None when nothing was delivered
    jitter_us2: float | None
    delivered: int
    dropped: int


@dataclass(frozen=True)
class MetricsReport:
    per_ac: tuple[ACMetrics, ...]
    aggregate: ACMetrics
    observed_duration_us: float
    counts: dict = field(default_factory=dict)  # whole-run packet / frame accounting

    def ac(self, ac_id: int) -> ACMetrics:
        for m in self.per_ac:
            if m.ac_id == ac_id:
                return m
        raise KeyError(ac_id)


class MetricsAccumulator:
    """Collects deliveries and drops inside the measurement window.

    Throughput counts payload airtime only (``payload_bits / bitrate``) unless
    ``count_headers`` is set, in which case the full frame bits are credited.
    """

    def __init__(self, ac_ids=(0, 1, 2, 3), bitrate_bps: float = 1e6,
                 header_bits: int = 0, count_headers: bool = False, keep_samples: bool = True):
        self.bitrate_bps = bitrate_bps
        self.header_bits = header_bits if count_headers else 0
        self.keep_samples = keep_samples
        self.stats = {ac: _DelayStats() for ac in ac_ids}

    def record_delivery(self, ac_id: int, enqueue_time: float, completion_time: float, payload_bits: int):
        delay = completion_time - enqueue_time
        if delay < 0:
            raise ValueError(f"negative MAC delay {delay} for AC{ac_id}")
        s = self.stats[ac_id]
        s.add(delay)
        s.payload_bits += payload_bits
        if self.keep_samples:
            s.samples.append(delay)

    def record_drop(self, ac_id: int):
        self.stats[ac_id].dropped += 1

    def record_arrival(self, ac_id: int, payload_bits: int, count: int = 1):
        self.stats[ac_id].offered_bits += payload_bits * count

    def _airtime_us(self, payload_bits: int, frames: int) -> float:
        return (payload_bits + self.header_bits * frames) * 1e6 / self.bitrate_bps

    def finalize(self, observed_duration_us: float, counts: dict | None = None) -> MetricsReport:
        if observed_duration_us <= 0:
            raise ValueError("observed duration must be positive")
        rows = []
        tot_bits = tot_n = tot_drop = tot_offered = 0
        tot_mean = tot_m2 = 0.0
        for ac, s in sorted(self.stats.items()):
            thr = self._airtime_us(s.payload_bits, s.n) / observed_duration_us
            offered = s.offered_bits * 1e6 / self.bitrate_bps / observed_duration_us
            rows.append(ACMetrics(
                ac_id=ac, throughput=thr, offered=offered,
                mean_delay_us=s.mean if s.n else None,
                jitter_us2=s.m2 / s.n if s.n else None,
                delivered=s.n, dropped=s.dropped,
            ))
            # Chan et al. parallel merge for the aggregate delay stats
            if s.n:
                n = tot_n + s.n
                delta = s.mean - tot_mean
                tot_mean += delta * s.n / n
                tot_m2 += s.m2 + delta * delta * tot_n * s.n / n
                tot_n = n
            tot_bits += s.payload_bits
            tot_drop += s.dropped
            tot_offered += s.offered_bits
        aggregate = ACMetrics(
            ac_id=None,
            throughput=self._airtime_us(tot_bits, tot_n) / observed_duration_us,
            offered=tot_offered * 1e6 / self.bitrate_bps / observed_duration_us,
            mean_delay_us=tot_mean if tot_n else None,
            jitter_us2=tot_m2 / tot_n if tot_n else None,
            delivered=tot_n, dropped=tot_drop,
        )
        return MetricsReport(tuple(rows), aggregate, observed_duration_us, dict(counts or {}))
