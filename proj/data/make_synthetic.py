"""Regenerates the small synthetic files in this directory."""
import numpy as np

rng = np.random.default_rng(20240)


def clusters(path, n_per_class, offset):
    rows = []
    for label, sign in (("a", -1.0), ("b", 1.0)):
        x = rng.normal(size=(n_per_class, 2))
        x[:, 0] += sign * offset
        rows += [f"{u:.6f},{v:.6f},{label}" for u, v in x]
    order = rng.permutation(len(rows))
    with open(path, "w") as f:
        f.write("x1,x2,class\n")
        f.write("\n".join(rows[i] for i in order) + "\n")


def hmm_sequences(path, n_per_class, length):
    letters = "ACDE"
    models = {
        "up": (np.array([0.9, 0.1]), np.array([[0.8, 0.2], [0.2, 0.8]]),
               np.array([[0.6, 0.3, 0.05, 0.05], [0.05, 0.05, 0.3, 0.6]])),
        "down": (np.array([0.5, 0.5]), np.array([[0.3, 0.7], [0.7, 0.3]]),
                 np.array([[0.25, 0.25, 0.25, 0.25], [0.4, 0.1, 0.1, 0.4]])),
    }
    lines = []
    for label, (pi, A, B) in models.items():
        for _ in range(n_per_class):
            s = rng.choice(2, p=pi)
            seq = []
            for _ in range(length):
                seq.append(letters[rng.choice(4, p=B[s])])
                s = rng.choice(2, p=A[s])
            lines.append(f"{label},{''.join(seq)}")
    order = rng.permutation(len(lines))
    with open(path, "w") as f:
        f.write("\n".join(lines[i] for i in order) + "\n")


clusters("two_cluster.csv", 60, 1.5)
clusters("two_cluster_test.csv", 100, 1.5)
hmm_sequences("sequences.txt", 40, 20)
