import os
from setuptools import setup
#read
def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()

if __name__ == "__main__":
    setup(name="vlio",

          version = "0.0.1",

          description = "Vibration-aware LiDAR-inertial odometry with point-wise undistortion uncertainty",
          long_description=read('README.rst'),
          license = "GPLv3",
          keywords = "lidar imu odometry kalman filter vibration",
          packages = ["vlio"],
          install_requires=["numpy",
                            "scipy",
                            "tqdm",
                            "matplotlib",
                            "h5py",
                            "pyyaml"
                          ],
          extras_require={'tests': ['pytest']},
          entry_points={'console_scripts': ['vlio=vlio.cli:main']},
          classifiers=[
            'Development Status :: 3 - Alpha',
            'Intended Audience :: Science/Research',
            'Topic :: Scientific/Engineering',
            'License :: OSI Approved :: GNU General Public License v3 (GPLv3)',
            'Programming Language :: Python :: 3.8',
          ],

         )
