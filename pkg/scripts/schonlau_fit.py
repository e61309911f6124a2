"""Fit the five-point Schonlau example and print the model log and an EI profile."""
import numpy as np

from spotkit import KrigingConfig, fit

X = np.array([[1.0], [2.0], [3.0], [4.0], [12.0]])
y = np.array([0.0, -1.75, -2.0, -0.5, 5.0])

model = fit(X, y, KrigingConfig(), seed=0)
print({k: np.asarray(v).tolist() for k, v in model.log.items()})
print(f"{'x':>6} {'mean':>9} {'std':>8} {'ei':>8}")
for x in np.linspace(1, 12, 23):
    mean, std, nei = model.predict(np.array([x]))
    print(f"{x:6.2f} {mean:9.4f} {std:8.4f} {-nei:8.4f}")
