"""Query-embedding instance tracking toolkit."""
