"""Desk-scale dual-arm mobile manipulator stack: joint control simulation,
marker-based hand tracking, whole-body kinematics, and remote teleoperation."""

__version__ = "0.1.0"
