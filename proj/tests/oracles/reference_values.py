"""Recomputes the constants frozen in the unit tests with plain numpy."""
import numpy as np

np.set_printoptions(precision=17)


def show(name, value):
    print(name, repr(np.asarray(value).tolist()))


# Two-layer network, relu then identity.
W1 = np.array([[0.1, 0.2, -0.3], [0.4, -0.5, 0.6]])
b1 = np.array([0.1, -0.1])
W2 = np.array([[1.0, -1.0], [0.5, 0.25]])
b2 = np.array([0.0, 0.2])
x = np.array([1.0, 2.0, 3.0])
h = np.maximum(W1 @ x + b1, 0.0)
show("two_layer", W2 @ h + b2)

# Softmax over columns.
logits = np.array([[1.0, -2.0], [2.0, 0.0], [3.0, 1000.0]])
p = np.exp(logits - logits.max(axis=0))
p /= p.sum(axis=0)
show("softmax", p.T)

# Cross-entropy on a 3x2 probability matrix.
probs = np.array([[0.7, 0.1], [0.2, 0.3], [0.1, 0.6]])
labels = [0, 2]
show("ce", -sum(np.log(probs[l, j]) for j, l in enumerate(labels)))

# Entropy summed over columns.
show("entropy", -(probs * np.log(probs)).sum())

# Center loss and averaged center update.
feats = np.array([[1.0, 2.0, -1.0], [0.0, 1.0, 3.0]])
flabels = [0, 0, 1]
centers = np.array([[0.5, 0.5], [-1.0, 2.0], [4.0, 4.0]])
value = sum(((feats[:, j] - centers[l]) ** 2).sum() for j, l in enumerate(flabels))
show("center_value", value)
delta = np.zeros_like(centers)
for k in range(3):
    members = [j for j, l in enumerate(flabels) if l == k]
    if members:
        delta[k] = sum(centers[k] - feats[:, j] for j in members) / (1 + len(members))
show("center_delta", delta)

# Reconstruction on a fixed 4x3 pair.
a = np.arange(12, dtype=float).reshape(4, 3) / 10.0
b = np.cos(np.arange(12, dtype=float)).reshape(4, 3)
show("reconstruction", ((a - b) ** 2).sum())

# Ridge regression to one-hot labels with an appended bias input.
f1 = np.array([[0.0, 1.0, 2.0, 3.0, 4.0], [1.0, 0.0, 1.0, 0.0, 1.0]])
y = np.array([0, 0, 1, 1, 1])
Y = np.eye(2)[:, y]
Xa = np.vstack([f1, np.ones(5)])
lam = 1e-3
Wr = Y @ Xa.T @ np.linalg.inv(Xa @ Xa.T + lam * np.eye(3))
show("ridge_map", Wr)

# Average precision examples.
def ap(flags):
    hits, total = 0, 0.0
    for r, f in enumerate(flags):
        if f:
            hits += 1
            total += hits / (r + 1)
    return total / hits if hits else 0.0

show("ap_0110", ap([0, 1, 1, 0]))
show("ap_10001", ap([1, 0, 0, 0, 1]))
