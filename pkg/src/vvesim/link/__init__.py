"""Controller/environment link: wire codec, frame transform, latency, handshake, HIL and replay."""

from .latency import DelayLine, LatencyModel, latency_apply
from .protocol import MAGIC, VERSION, ActorRecord, MsgType, StartPayload, WireMessage, decode, encode
from .transform import FrameTransform, PosePayload, inverse_transform, transform_pose

__all__ = ["MAGIC", "VERSION", "ActorRecord", "DelayLine", "FrameTransform", "LatencyModel",
           "MsgType", "PosePayload", "StartPayload", "WireMessage", "decode", "encode",
           "inverse_transform", "latency_apply", "transform_pose"]
