"""Desk-scale mobile-manipulator simulator and learning stack.

A Stretch-like robot with an actuated, limited-FOV head camera learns to
perceive (active camera control), navigate (whole-body obstacle avoidance)
and pick objects in procedurally generated clutter.  The package contains
the kinematic simulator, the perception models (corner "scandots" and
ray-cast depth), the recurrent policies, the PPO / imitation / distillation
trainers, classical map-plan-localize baselines and the benchmark harness.
"""

__version__ = "0.1.0"
