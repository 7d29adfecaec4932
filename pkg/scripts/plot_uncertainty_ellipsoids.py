# Plot per-point undistortion uncertainty of one simulated sweep during a pitch vibration
import numpy as np
import matplotlib.pyplot as plt

from vlio.config import RunConfig, scenario_from_preset
from vlio.propagation import NavState, build_pose_timeline, undistort
from vlio.sim import render_scan, synthesize_imu, trajectory_at
from vlio.uncertainty import scan_covariances

plt.close('all')
plt.ion()
plt.show()

##################################
# definitions
##################################
preset = 'pitch_2hz'
t0 = 10.13             # scan start, inside the vibration episode
nshow = 400            # ellipses to draw
nsig = 3.              # ellipse radius in sigma
scale = 20.            # exaggeration of the ellipse size
outfile = './ellipsoids_%s_t%0.2f.pdf' % (preset, t0)

##################################
# simulate one sweep and its imu
##################################
scenario = scenario_from_preset(preset, noiseless=True)
profile = scenario.profile()
rig = scenario.rig()
cfg = RunConfig().validate()

imu = synthesize_imu(profile, rig, t0 - 1., t0 + 1., noiseless=True)
rot, pos, vel, _, _ = trajectory_at(profile, t0)
state = NavState(rot=rot[0], pos=pos[0], vel=vel[0], t=t0)
raw, truth = render_scan(scenario.world(), profile, rig, t0, noiseless=True)
timeline = build_pose_timeline(state, imu, t0 + rig.scan_period)
und = undistort(raw, timeline, rig.extrinsics)
cov, intensity = scan_covariances(und, imu.between(t0, t0 + rig.scan_period), timeline,
                                  cfg.beam(), cfg.uncertainty_config(), rig.extrinsics)
print('k_omega', intensity.k_omega, 'k_v', intensity.k_v)

##################################
# top view of the covariance ellipses
##################################
idx = np.linspace(0, len(und) - 1, nshow).astype(int)
theta = np.linspace(0, 2*np.pi, 64)
circ = np.stack([np.cos(theta), np.sin(theta)])

fig = plt.figure(figsize=(7, 7))
ax = plt.gca()
ax.scatter(und.points[:, 0], und.points[:, 1], s=1, c=und.dt, cmap='viridis')
for i in idx:
    C = cov.total[i][:2, :2]
    evals, evecs = np.linalg.eigh(C)
    ell = evecs @ (np.sqrt(np.maximum(evals, 0))[:, None]*circ)*nsig*scale
    ax.plot(und.points[i, 0] + ell[0], und.points[i, 1] + ell[1], color='r', lw=0.5)
ax.set_xlabel('x [m]')
ax.set_ylabel('y [m]')
ax.set_aspect('equal')
ax.set_title('%s, t = %.2f s, %dx %d-sigma' % (preset, t0, scale, nsig))

# sigma growth with firing time
fig2 = plt.figure()
ax2 = plt.gca()
sig = np.sqrt(np.trace(cov.total, axis1=1, axis2=2))
ax2.plot(und.dt, sig, 'k.', ms=1)
ax2.set_xlabel('dt [s]')
ax2.set_ylabel('sqrt(tr C) [m]')

fig.savefig(outfile, bbox_inches='tight')
