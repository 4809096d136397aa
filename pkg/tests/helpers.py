import numpy as np

from riskval.ingest import Cohort, SubjectRecord
from riskval.model_core import predict_probability
from riskval.simulate import Bernoulli, SimConfig, Uniform


def cohort_from_arrays(labels, features, sex=None):
    n = len(labels)
    sex = np.zeros(n, int) if sex is None else np.asarray(sex, int)
    subjects = tuple(
        SubjectRecord(f"S{i:05d}", int(sex[i]), int(labels[i]), {k: float(v[i]) for k, v in features.items()})
        for i in range(n)
    )
    return Cohort(subjects)


def simple_config(model, n, seed, shift=0.0):
    gens = {}
    for p in model.predictors:
        gens[p.name] = Bernoulli(0.5) if p.range == "binary" else Uniform()
    return SimConfig(model=model, n=n, generators=gens, intercept_shift=shift, seed=seed)


def self_calibrated_labels(lp, rng):
    return (rng.random(len(lp)) < predict_probability(np.asarray(lp))).astype(int)
