"""Regenerate the bundled 100-sample SVM fixture."""

from proxsplit.problems import DATA_DIR, make_toy_svm, write_libsvm

if __name__ == "__main__":
    data = make_toy_svm(M=100, d=10, seed=0)
    write_libsvm(DATA_DIR / "svm_toy.libsvm", data)
    print(f"wrote {data.M} samples with {data.d} features")
