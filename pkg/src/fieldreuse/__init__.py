"""Field-data reuse for underwater acoustic modem evaluation."""
