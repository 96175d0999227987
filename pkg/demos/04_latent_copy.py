"""
Copying a teacher's latent distribution
=======================================

Train an unregularized teacher, dump its codes, and train a student whose
prior is that dump. The student ends up with the teacher's marginals.
"""

from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp

from mmdsculpt.data import generate_xy_family
from mmdsculpt.models import encode_array
from mmdsculpt.mmd import mmd2_biased
from mmdsculpt.priors import PriorSpec, build_empirical_prior, sample_prior
from mmdsculpt.trainer import TrainConfig, seed_streams, train

out = Path("demo_out/copy")
out.mkdir(parents=True, exist_ok=True)
rngs = seed_streams(0)
images, _ = generate_xy_family("XY", 2000, 32, rngs["data"])

# teacher: reconstruction only, so its codes are whatever shape training left them
teacher, _ = train(TrainConfig(lam=0.0, regularizer="none", batch_size=256, lr=1e-3, epochs=30), images)
dump = build_empirical_prior(lambda x: encode_array(teacher, x), images, out / "teacher.ltnt")
prior = PriorSpec.from_dump(dump)

# student: a different seed, pulled towards the teacher's empirical code distribution
student, _ = train(TrainConfig(lam=1.0, batch_size=256, lr=1e-3, epochs=40, seed=1), images, prior)
z = encode_array(student, images)

rng = np.random.default_rng(1)
batch = z[rng.choice(len(z), 512, replace=False)]
print("MMD^2 student vs teacher:", mmd2_biased(batch, sample_prior(prior, 512, rng)).value)
for i in range(2):
    print(f"KS dim {i}:", ks_2samp(z[:, i], prior.empirical.table[:, i]).statistic)
