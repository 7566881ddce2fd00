"""Pin BLAS to one thread: every matrix in this suite is tiny (<= 129x129),
where thread fan-out costs far more than it saves."""

try:
    from threadpoolctl import threadpool_limits

    threadpool_limits(limits=1)
except ImportError:  # pragma: no cover
    pass
