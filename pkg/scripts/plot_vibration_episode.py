# Plot the true trajectory of a vibration scenario next to an odometry estimate
import sys
import numpy as np
import matplotlib.pyplot as plt

from vlio.config import scenario_from_preset
from vlio.sim import trajectory_at
from vlio.trajectory import loadtum

plt.close('all')
plt.ion()
plt.show()

##################################
# definitions
##################################
preset = 'hybrid'
estfile = sys.argv[1] if len(sys.argv) > 1 else None   # estimate.tum of a run, optional
dt = 0.005
outfile = './episode_%s.pdf' % preset

##################################
# calculate and plot
##################################
scenario = scenario_from_preset(preset)
profile = scenario.profile()
t = np.arange(0, profile.duration, dt)
rot, pos, vel, omega, acc = trajectory_at(profile, t)
E = profile.envelope(t)[0]

fig, axs = plt.subplots(3, 1, sharex=True, figsize=(8, 8))
axs[0].plot(t, pos[:, 2] - pos[0, 2], 'k-', lw=1, label='truth')
axs[0].plot(t, 0.03*E, 'r--', lw=0.5, label='envelope')
axs[0].set_ylabel('z [m]')
axs[1].plot(t, np.degrees(omega), lw=1)
axs[1].set_ylabel('omega [deg/s]')
axs[1].legend(['x', 'y', 'z'])
axs[2].plot(t, np.linalg.norm(acc, axis=-1), 'k-', lw=1)
axs[2].set_ylabel('|a| [m/s^2]')
axs[2].set_xlabel('t [s]')

if estfile is not None:
    est = loadtum(estfile)
    axs[0].plot(est.t, est.pos[:, 2] - est.pos[0, 2], 'b.', ms=2, label='estimate')
axs[0].legend()

plt.tight_layout()
fig.savefig(outfile, bbox_inches='tight')
