"""Built-in capability taxonomy for synthetic corpora.

Forty categories, six phrasings each. Every phrase in a category carries the
category's head token (route, sentiment, lidar, ...), so paraphrases share
vocabulary even for a lexical embedder; the tails (planning, detection,
analysis, ...) recur across categories and act as distractors whose density
grows with the agent population.
"""
from __future__ import annotations

CATEGORY_PHRASES: dict[str, list[str]] = {
    "route": [
        "route planning",
        "route optimization",
        "route scheduling",
        "route selection",
        "route computation",
        "route analysis",
    ],
    "traffic": [
        "traffic control",
        "traffic management",
        "traffic monitoring",
        "traffic forecasting",
        "traffic analysis",
        "traffic optimization",
    ],
    "sentiment": [
        "sentiment classification",
        "sentiment analysis",
        "sentiment scoring",
        "sentiment detection",
        "sentiment tracking",
        "sentiment assessment",
    ],
    "translation": [
        "text translation",
        "document translation",
        "contract translation",
        "realtime translation",
        "subtitle translation",
        "translation review",
    ],
    "summarization": [
        "document summarization",
        "meeting summarization",
        "report summarization",
        "article summarization",
        "email summarization",
        "summarization quality review",
    ],
    "image": [
        "image classification",
        "image labeling",
        "image segmentation",
        "image enhancement",
        "image search",
        "image inspection",
    ],
    "obstacle": [
        "obstacle detection",
        "obstacle avoidance",
        "obstacle mapping",
        "obstacle tracking",
        "obstacle recognition",
        "obstacle analysis",
    ],
    "anomaly": [
        "anomaly detection",
        "anomaly scoring",
        "anomaly investigation",
        "anomaly classification",
        "anomaly monitoring",
        "anomaly forecasting",
    ],
    "speech": [
        "speech recognition",
        "speech transcription",
        "speech enhancement",
        "speech synthesis",
        "speech analysis",
        "speech segmentation",
    ],
    "inventory": [
        "inventory management",
        "inventory tracking",
        "inventory auditing",
        "inventory forecasting",
        "inventory optimization",
        "inventory counting",
    ],
    "drone": [
        "drone mapping",
        "drone inspection",
        "drone surveying",
        "drone photography",
        "drone monitoring",
        "drone routing",
    ],
    "energy": [
        "energy optimization",
        "energy scheduling",
        "energy monitoring",
        "energy forecasting",
        "energy auditing",
        "energy management",
    ],
    "crop": [
        "crop monitoring",
        "crop scouting",
        "crop yield estimation",
        "crop health assessment",
        "crop mapping",
        "crop forecasting",
    ],
    "patient": [
        "patient triage",
        "patient prioritization",
        "patient screening",
        "patient monitoring",
        "patient scheduling",
        "patient intake assessment",
    ],
    "code": [
        "code generation",
        "code review",
        "code completion",
        "code analysis",
        "code refactoring",
        "code inspection",
    ],
    "defect": [
        "defect detection",
        "defect classification",
        "defect tracking",
        "defect triage",
        "defect inspection",
        "defect prediction",
    ],
    "record": [
        "record deduplication",
        "record normalization",
        "record validation",
        "record cleaning",
        "record matching",
        "record enrichment",
    ],
    "demand": [
        "demand forecasting",
        "demand planning",
        "demand estimation",
        "demand modeling",
        "demand tracking",
        "demand analysis",
    ],
    "recommendation": [
        "product recommendation",
        "content recommendation",
        "recommendation ranking",
        "recommendation filtering",
        "personalized recommendation",
        "recommendation scoring",
    ],
    "meeting": [
        "meeting scheduling",
        "meeting coordination",
        "meeting booking",
        "meeting planning",
        "meeting notes extraction",
        "meeting transcription",
    ],
    "contract": [
        "contract negotiation",
        "contract review",
        "contract drafting",
        "contract analysis",
        "contract clause extraction",
        "contract compliance checking",
    ],
    "document": [
        "document retrieval",
        "document search",
        "document indexing",
        "document ranking",
        "document clustering",
        "document classification",
    ],
    "question": [
        "question answering",
        "question routing",
        "question classification",
        "question generation",
        "question matching",
        "question reformulation",
    ],
    "ticket": [
        "ticket triage",
        "ticket routing",
        "ticket classification",
        "ticket resolution",
        "ticket tracking",
        "ticket escalation",
    ],
    "grasp": [
        "robotic grasping",
        "grasp planning",
        "grasp detection",
        "grasp stability assessment",
        "grasp pose estimation",
        "grasp execution",
    ],
    "indoor": [
        "indoor navigation",
        "indoor positioning",
        "indoor mapping",
        "indoor localization",
        "indoor wayfinding",
        "indoor routing",
    ],
    "face": [
        "face recognition",
        "face verification",
        "face detection",
        "face clustering",
        "face matching",
        "face tracking",
    ],
    "invoice": [
        "invoice extraction",
        "invoice parsing",
        "invoice validation",
        "invoice matching",
        "invoice classification",
        "invoice auditing",
    ],
    "entity": [
        "entity linking",
        "entity extraction",
        "entity resolution",
        "entity matching",
        "entity classification",
        "entity disambiguation",
    ],
    "threat": [
        "threat detection",
        "threat assessment",
        "threat monitoring",
        "threat classification",
        "threat screening",
        "threat report analysis",
    ],
    "video": [
        "video summarization",
        "video captioning",
        "video segmentation",
        "video tracking",
        "video classification",
        "video enhancement",
    ],
    "terrain": [
        "terrain modeling",
        "terrain mapping",
        "terrain analysis",
        "terrain reconstruction",
        "terrain classification",
        "terrain surveying",
    ],
    "portfolio": [
        "portfolio analysis",
        "portfolio optimization",
        "portfolio rebalancing",
        "portfolio risk assessment",
        "portfolio monitoring",
        "portfolio reporting",
    ],
    "compliance": [
        "compliance checking",
        "compliance auditing",
        "compliance monitoring",
        "compliance reporting",
        "compliance screening",
        "compliance review",
    ],
    "toxicity": [
        "toxicity detection",
        "toxicity scoring",
        "toxicity filtering",
        "toxicity classification",
        "toxicity moderation",
        "toxicity screening",
    ],
    "physics": [
        "physics simulation",
        "physics modeling",
        "physics calibration",
        "physics parameter estimation",
        "physics scene prediction",
        "physics engine tuning",
    ],
    "constraint": [
        "constraint optimization",
        "constraint solving",
        "constraint propagation",
        "constraint checking",
        "constraint modeling",
        "constraint relaxation",
    ],
    "lidar": [
        "lidar mapping",
        "lidar calibration",
        "lidar odometry",
        "lidar segmentation",
        "lidar localization",
        "lidar scanning",
    ],
    "appliance": [
        "appliance scheduling",
        "appliance control",
        "appliance monitoring",
        "appliance automation",
        "appliance diagnostics",
        "appliance energy tracking",
    ],
    "weather": [
        "weather forecasting",
        "weather monitoring",
        "weather modeling",
        "weather alerting",
        "weather analysis",
        "weather nowcasting",
    ],
}

ROLES = (
    "planner",
    "assistant",
    "sensor",
    "translator",
    "analyst",
    "coordinator",
    "inspector",
    "navigator",
    "operator",
    "advisor",
)
