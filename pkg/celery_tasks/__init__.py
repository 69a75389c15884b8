"""
Queue-backed swap stage: frame edits dispatched as Celery tasks.
"""
