from infra.storage.local import LocalStorage, read_json, read_matrix_csv

__all__ = ["LocalStorage", "read_json", "read_matrix_csv"]
