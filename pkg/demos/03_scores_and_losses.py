"""Structure scores and the three training losses on hand-picked numbers."""

import numpy as np

from anchorkgc import kge
from anchorkgc.losses import adversarial_weights, alignment, info_nce, self_adversarial

h = np.array([1.0, 0.0, 0.5, 0.5])
r = np.array([0.0, 1.0, 0.0, 0.0])
t = np.array([1.0, 1.0, 0.5, 0.5])

# transe is a negative distance: t = h + r scores 0
for kind in kge.KINDS:
    print(f"{kind:8s} {float(kge.score(kind, h, r, t)):+.4f}")

# contrastive loss on cosines; the margin gamma_c is taken off the positive
print("info_nce, clear winner:", info_nce(0.9, [0.1, 0.0, -0.2]))
print("info_nce, tie:         ", info_nce(0.5, [0.5 - 0.02]), "vs log 2 =", np.log(2))

# hard negatives (higher score) get more weight
print("weights", np.round(adversarial_weights(np.array([[-1.0, -3.0, -8.0]]), np.zeros((1, 3), bool)), 3))
print("self_adversarial", self_adversarial(-1.0, [-3.0, -8.0], gamma_k=9.0))

# projected text vector g close to the tail, far from the head: zero hinge, small MSE
g = np.array([1.0, 1.0])
print("alignment", alignment(g, np.array([0.0, -2.0]), np.array([1.0, 0.9]), gamma_m=1.0))
